"""Adaptive memory: edge-of-distribution and hard-sample selection.

A running Gaussian envelope over the classifier-input features admits a
sample as an Edge case when its squared Mahalanobis distance lands inside
the thin chi-square band [q(0.99), q(0.999)] for u' degrees of freedom, and
as a Hard case when the top-two prediction probabilities nearly tie
(y1/(y1+y2) <= 0.55). Admitted samples go to a bounded FIFO store that the
network replays after inserting a layer.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .errors import DomainError

HARD_RATIO_THRESHOLD = 0.55
EDGE_ALPHA_LOW = 0.99
EDGE_ALPHA_HIGH = 0.999


def chi2_inverse(u: int, alpha: float) -> float:
    """Quantile of the chi-square distribution by bisection.

    Solves P(chi2_u <= q) = alpha on the regularized lower incomplete gamma
    function; the bracket is doubled until it encloses the root, then split
    to an absolute width below 1e-10.
    """
    if u < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {u}")
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    half = 0.5 * u

    def cdf(q):
        return float(gammainc(half, 0.5 * q))

    lo, hi = 0.0, float(max(u, 1))
    while cdf(hi) < alpha:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError(f"quantile bracket blown up for u={u}, alpha={alpha}")
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class GaussianEnvelope:
    """Running mean/covariance with a maintained (ridged) inverse."""

    def __init__(self, dim: int):
        if dim < 1:
            raise DomainError(f"envelope dimension must be >= 1, got {dim}")
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))
        self._inv = None
        self._dirty = True
        self.t_low = chi2_inverse(dim, EDGE_ALPHA_LOW)
        self.t_high = chi2_inverse(dim, EDGE_ALPHA_HIGH)

    @property
    def ready(self) -> bool:
        """Fitted once it has seen at least dim + 1 samples."""
        return self.count >= self.dim + 1

    def update(self, x: np.ndarray):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise DomainError(f"expected {self.dim}-dim sample, got {x.size}")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += np.outer(delta, x - self.mean)
        self._dirty = True

    @property
    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros((self.dim, self.dim))
        return self._m2 / (self.count - 1)

    @property
    def inverse_covariance(self) -> np.ndarray:
        if self._dirty:
            cov = self.covariance
            ridge = 1e-6 * max(np.trace(cov), 1e-12) / self.dim
            self._inv = np.linalg.inv(cov + ridge * np.eye(self.dim))
            self._dirty = False
        return self._inv

    def mahalanobis_sq(self, x: np.ndarray) -> float:
        d = np.asarray(x, dtype=float).ravel() - self.mean
        return float(d @ self.inverse_covariance @ d)


def edge_test(env: GaussianEnvelope, x: np.ndarray) -> bool:
    """True when x sits in the thin shell between the 0.99 and 0.999 quantiles."""
    if not env.ready:
        return False
    dist = env.mahalanobis_sq(x)
    return env.t_low <= dist <= env.t_high


def hard_test(yhat) -> bool:
    """True when the top-two class probabilities nearly tie."""
    probs = np.asarray(yhat, dtype=float).ravel()
    if probs.size < 2:
        raise DomainError(f"need >= 2 class probabilities, got {probs.size}")
    top2 = np.sort(probs)[-2:]
    denom = top2[0] + top2[1]
    if denom <= 0.0:
        return True
    return top2[1] / denom <= HARD_RATIO_THRESHOLD


@dataclass
class MemoryEntry:
    features: np.ndarray
    label: int
    reason: str  # "edge" | "hard"
    batch: int


class MemoryStore:
    """Bounded FIFO store of admitted samples."""

    def __init__(self, capacity: int = 500):
        if capacity < 1:
            raise DomainError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries: list[MemoryEntry] = []

    def add(self, entry: MemoryEntry):
        self.entries.append(entry)
        if len(self.entries) > self.capacity:
            del self.entries[0]

    def __len__(self):
        return len(self.entries)

    def reasons(self) -> dict:
        out = {"edge": 0, "hard": 0}
        for e in self.entries:
            out[e.reason] += 1
        return out

    def feature_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        return np.stack([e.features for e in self.entries])

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=int)

    def dump_json(self, path):
        payload = [{"features": e.features.tolist(), "label": int(e.label),
                    "reason": e.reason, "batch": int(e.batch)} for e in self.entries]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    def dump_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "reason", "batch", "features"])
            for e in self.entries:
                writer.writerow([int(e.label), e.reason, int(e.batch),
                                 " ".join(repr(v) for v in e.features.tolist())])


def update_and_admit(env: GaussianEnvelope, store: MemoryStore, x, yhat,
                     label: int, batch: int = -1) -> bool:
    """Fold x into the envelope, then admit by the edge or hard rule.

    Nothing is admitted while the envelope is still warming up (fewer than
    dim + 1 samples seen, this one included).
    """
    x = np.asarray(x, dtype=float).ravel()
    env.update(x)
    if not env.ready:
        return False
    if edge_test(env, x):
        reason = "edge"
    elif hard_test(yhat):
        reason = "hard"
    else:
        return False
    store.add(MemoryEntry(features=x.copy(), label=int(label), reason=reason, batch=batch))
    return True
