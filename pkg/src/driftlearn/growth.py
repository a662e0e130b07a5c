"""Network-significance statistics driving node growth and pruning.

Per sample, the squared bias ||f(mu) - y||^2 and variance ||f(x) - f(mu)||^2
of the classifier output are estimated around the running feature mean mu.
Their square roots feed two SPC-style accumulators; growth fires when the
bias level escapes its historical minimum band, pruning when the variance
level does. The band width is dynamic:

    kappa = 1.25 * exp(-Bias^2) + 0.75        (growth)
    xi    = 1.25 * exp(-Var^2)  + 0.75        (pruning, applied as 2*xi)

with the running mean of each statistic as the exponent argument. Minimums
reset to the current values whenever their condition fires.
"""
from __future__ import annotations

import math

import numpy as np


def kappa(bias_sq: float) -> float:
    """Dynamic growth-band multiplier; 2.0 at zero, floor 0.75."""
    return 1.25 * math.exp(-bias_sq) + 0.75


def xi(var_sq: float) -> float:
    """Dynamic pruning-band multiplier, used doubled to keep a fresh node alive."""
    return 1.25 * math.exp(-var_sq) + 0.75


class _Welford:
    """Cumulative mean/variance accumulator."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def observe(self, value: float):
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (value - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / self.n) if self.n else 0.0


class SpcStat:
    """One SPC channel: running mean/std plus their minima since last reset."""

    def __init__(self):
        self.wf = _Welford()
        self.mu_min = math.inf
        self.sigma_min = math.inf

    def observe(self, value: float):
        self.wf.observe(value)
        self.mu_min = min(self.mu_min, self.wf.mean)
        self.sigma_min = min(self.sigma_min, self.wf.std)

    def reset_min(self):
        self.mu_min = self.wf.mean
        self.sigma_min = self.wf.std

    @property
    def level(self) -> float:
        return self.wf.mean + self.wf.std

    @property
    def floor(self) -> float:
        return self.mu_min + self.sigma_min

    def state(self) -> dict:
        return {"n": self.wf.n, "mean": self.wf.mean, "m2": self.wf.m2,
                "mu_min": self.mu_min, "sigma_min": self.sigma_min}

    def load(self, state: dict):
        self.wf.n = int(state["n"])
        self.wf.mean = float(state["mean"])
        self.wf.m2 = float(state["m2"])
        self.mu_min = float(state["mu_min"])
        self.sigma_min = float(state["sigma_min"])


class NsState:
    """Feature-mean tracker plus the bias and variance SPC channels.

    The feature mean decays exponentially (factor 0.999) by default so the
    Gaussian picture follows drifting inputs; ``cumulative=True`` switches to
    a plain running average.
    """

    def __init__(self, decay: float = 0.999, cumulative: bool = False):
        self.decay = float(decay)
        self.cumulative = bool(cumulative)
        self.feature_mean = None
        self.count = 0
        self.bias_stat = SpcStat()
        self.var_stat = SpcStat()

    def ingest(self, x: np.ndarray, bias2: float, variance: float):
        """Fold one sample in: update the mean, record the SPC statistics.

        The first sample only seeds the mean (its estimate is the (0,0)
        bootstrap and would dilute the accumulators).
        """
        x = np.asarray(x, dtype=float).ravel()
        if self.feature_mean is None:
            self.feature_mean = x.copy()
            self.count = 1
            return
        self.count += 1
        self.bias_stat.observe(math.sqrt(max(bias2, 0.0)))
        self.var_stat.observe(math.sqrt(max(variance, 0.0)))
        if self.cumulative:
            self.feature_mean += (x - self.feature_mean) / self.count
        else:
            self.feature_mean = self.decay * self.feature_mean + (1.0 - self.decay) * x

    def state(self) -> dict:
        return {
            "decay": self.decay,
            "cumulative": self.cumulative,
            "count": self.count,
            "feature_mean": None if self.feature_mean is None else self.feature_mean.tolist(),
            "bias": self.bias_stat.state(),
            "var": self.var_stat.state(),
        }

    def load(self, state: dict):
        self.decay = float(state["decay"])
        self.cumulative = bool(state["cumulative"])
        self.count = int(state["count"])
        fm = state["feature_mean"]
        self.feature_mean = None if fm is None else np.asarray(fm, dtype=float)
        self.bias_stat.load(state["bias"])
        self.var_stat.load(state["var"])


def estimate_bias_variance(net, ns: NsState, x: np.ndarray, y: np.ndarray,
                           probs_x: np.ndarray | None = None):
    """Squared bias and variance of the classifier output around the mean.

    ``x`` is the classifier-input feature vector; ``y`` the one-hot target.
    Returns (0, 0) while the feature mean is unseeded (bootstrap).
    """
    if ns.feature_mean is None:
        return 0.0, 0.0
    f_mu = net.classify_features(ns.feature_mean[None, :])[0]
    if probs_x is None:
        probs_x = net.classify_features(np.atleast_2d(x))[0]
    bias2 = float(np.sum((f_mu - np.asarray(y, dtype=float)) ** 2))
    variance = float(np.sum((np.asarray(probs_x, dtype=float) - f_mu) ** 2))
    return bias2, variance


def maybe_grow(ns: NsState) -> bool:
    """SPC growth trigger on the bias channel; resets its minima when firing.

    Requires the current level to strictly exceed the minimum level so a
    freshly reset (or all-zero) channel cannot re-fire on equality.
    """
    s = ns.bias_stat
    if s.wf.n == 0 or s.level == 0.0:
        return False
    if s.level <= s.floor:
        return False
    if s.level >= s.mu_min + kappa(s.wf.mean ** 2) * s.sigma_min:
        s.reset_min()
        return True
    return False


def maybe_prune(ns: NsState) -> bool:
    """SPC pruning trigger on the variance channel (doubled band width)."""
    s = ns.var_stat
    if s.wf.n == 0 or s.level == 0.0:
        return False
    if s.level <= s.floor:
        return False
    if s.level >= s.mu_min + 2.0 * xi(s.wf.mean ** 2) * s.sigma_min:
        s.reset_min()
        return True
    return False
