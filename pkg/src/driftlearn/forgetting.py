"""Soft forgetting: per-layer learning rates from activation relevance.

For each hidden layer the mean absolute Pearson correlation between its node
activations and the network outputs (over the current batch) measures how
much the layer participates in the present concept. The learning rate decays
sharply for uncorrelated layers:

    eta = 0.02 * exp(-(1/rho - 1)),  clamped to [0.001, 0.02]

so a perfectly correlated layer trains at the cap and an irrelevant one is
nearly frozen instead of being overwritten. The head (and the extractor)
always train at the cap; they must track the newest concept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

RATE_FLOOR = 0.001
RATE_CAP = 0.02


@dataclass
class LayerRatePlan:
    """Rates for every hidden layer plus the head (last entry)."""

    rates: list = field(default_factory=list)
    floor: float = RATE_FLOOR
    cap: float = RATE_CAP

    @property
    def hidden_rates(self):
        return self.rates[:-1]

    @property
    def head_rate(self):
        return self.rates[-1]


def layer_correlation(activations: np.ndarray, outputs: np.ndarray) -> float:
    """Mean |Pearson| over all (node, output) pairs; constant series count 0."""
    h = np.atleast_2d(np.asarray(activations, dtype=float))
    y = np.atleast_2d(np.asarray(outputs, dtype=float))
    n = h.shape[0]
    if n < 2 or y.shape[0] != n:
        raise DomainError(f"need >= 2 aligned rows, got {h.shape[0]} and {y.shape[0]}")
    hc = h - h.mean(axis=0)
    yc = y - y.mean(axis=0)
    sh = np.sqrt((hc ** 2).mean(axis=0))
    sy = np.sqrt((yc ** 2).mean(axis=0))
    cov = hc.T @ yc / n
    denom = sh[:, None] * sy[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0.0, cov / np.where(denom > 0.0, denom, 1.0), 0.0)
    corr = np.clip(corr, -1.0, 1.0)
    return float(np.mean(np.abs(corr)))


def rate_from_correlation(rho: float, floor: float = RATE_FLOOR,
                          cap: float = RATE_CAP) -> float:
    """eta = cap * exp(-(1/rho - 1)), clamped; rho = 0 hits the floor."""
    if rho <= 0.0:
        return floor
    raw = cap * math.exp(-(1.0 / min(rho, 1.0) - 1.0))
    return min(max(raw, floor), cap)


def rates_from_correlation(rhos, floor: float = RATE_FLOOR,
                           cap: float = RATE_CAP) -> LayerRatePlan:
    """Build the per-layer plan; the head is appended at the cap."""
    rates = [rate_from_correlation(r, floor, cap) for r in rhos]
    rates.append(cap)
    return LayerRatePlan(rates=rates, floor=floor, cap=cap)


def plan_for_batch(hidden_activations, outputs, floor: float = RATE_FLOOR,
                   cap: float = RATE_CAP) -> LayerRatePlan:
    """Rate plan from a batch's per-layer activations and its outputs."""
    rhos = [layer_correlation(act, outputs) for act in hidden_activations]
    return rates_from_correlation(rhos, floor, cap)
