"""Hoeffding-bound drift detection on per-batch error vectors.

Each processed batch yields a binary error vector (1 = misclassified). A
candidate cut splits it into prefix B and suffix C; the batch is scanned at
the 25/50/75-percent cuts in ascending order. A cut qualifies when the
prefix error sits significantly below the whole-batch level

    B + eps(B) <= A + eps(A)        (eps from the Hoeffding bound)

with the suffix mean strictly above the prefix mean, i.e. errors are rising
within the batch. The partition gap |B - C| is then graded against

    eps_{d,w} = sqrt(((N - cut) / (2 * cut * N)) * ln(1 / alpha_{d,w}))

to yield Drift, Warning or Stable. Only cuts in the first half of the batch
are graded: for a later cut the partition bound above drops below the
whole-batch Hoeffding bound at the same alpha, so the test would fire on
stationary noise. A qualifying late cut is still reported on the verdict.

The inequality direction above is deliberately the mirror of the common
printed form A + eps(A) <= B + eps(B), which any uniform vector satisfies
vacuously (eps grows as the window shrinks) while a genuine error rise fails
it. ``corrected_cut_rule=False`` restores the printed form for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

STABLE = "stable"
WARNING = "warning"
DRIFT = "drift"


def hoeffding_epsilon(n: int, alpha: float) -> float:
    """One-sided Hoeffding bound width for a mean of n bounded variables."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return math.sqrt(math.log(1.0 / alpha) / (2.0 * n))


def partition_epsilon(n: int, cut: int, alpha: float) -> float:
    """Bound width for the prefix/suffix mean gap at a given cut."""
    if not (0 < cut < n):
        raise DomainError(f"cut must split the vector, got cut={cut}, n={n}")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return math.sqrt((n - cut) / (2.0 * cut * n) * math.log(1.0 / alpha))


@dataclass
class DriftConfig:
    alpha_drift: float = 0.0001
    alpha_warning: float = 0.0005
    cut_fractions: tuple = (0.25, 0.5, 0.75)
    corrected_cut_rule: bool = True

    def __post_init__(self):
        if not (0.0 < self.alpha_drift < self.alpha_warning):
            raise DomainError(
                f"need 0 < alpha_drift < alpha_warning, got "
                f"{self.alpha_drift} and {self.alpha_warning}")
        if any(not (0.0 < f < 1.0) for f in self.cut_fractions):
            raise DomainError(f"cut fractions must lie in (0,1): {self.cut_fractions}")


@dataclass
class DriftVerdict:
    state: str
    cut: int | None
    gap: float
    eps_warning: float
    eps_drift: float

    def trace_row(self, batch: int) -> dict:
        return {"batch": batch, "state": self.state,
                "cut": "" if self.cut is None else self.cut,
                "gap": f"{self.gap:.6f}",
                "eps_warning": f"{self.eps_warning:.6f}",
                "eps_drift": f"{self.eps_drift:.6f}"}


def _as_error_vector(a) -> np.ndarray:
    vec = np.asarray(a, dtype=float).ravel()
    if vec.size < 4:
        raise DomainError(f"error vector needs >= 4 entries, got {vec.size}")
    if not np.all((vec == 0.0) | (vec == 1.0)):
        raise DomainError("error vector entries must be 0 or 1")
    return vec


def candidate_cuts(n: int, fractions) -> list:
    cuts = []
    for f in fractions:
        cut = int(math.floor(f * n))
        if 0 < cut < n and cut not in cuts:
            cuts.append(cut)
    return sorted(cuts)


def _cut_qualifies(vec, cut, cfg) -> bool:
    n = vec.size
    whole = float(vec.mean())
    prefix = float(vec[:cut].mean())
    eps_whole = hoeffding_epsilon(n, cfg.alpha_warning)
    eps_prefix = hoeffding_epsilon(cut, cfg.alpha_warning)
    if cfg.corrected_cut_rule:
        suffix = float(vec[cut:].mean())
        return prefix + eps_prefix <= whole + eps_whole and suffix > prefix
    return whole + eps_whole <= prefix + eps_prefix


def find_cut(a, cfg: DriftConfig = None) -> int | None:
    """First qualifying cut in ascending order, or None."""
    cfg = cfg or DriftConfig()
    vec = _as_error_vector(a)
    for cut in candidate_cuts(vec.size, cfg.cut_fractions):
        if _cut_qualifies(vec, cut, cfg):
            return cut
    return None


def assess(a, cfg: DriftConfig = None) -> DriftVerdict:
    """Grade one batch's error vector into Stable / Warning / Drift.

    Qualifying cuts are scanned ascending and the first one whose partition
    gap reaches at least Warning decides the verdict; cuts past the midpoint
    qualify but are not graded (see module docstring).
    """
    cfg = cfg or DriftConfig()
    vec = _as_error_vector(a)
    n = vec.size
    first_cut = None
    for cut in candidate_cuts(n, cfg.cut_fractions):
        if not _cut_qualifies(vec, cut, cfg):
            continue
        if first_cut is None:
            first_cut = cut
        if 2 * cut > n:
            continue
        gap = abs(float(vec[:cut].mean()) - float(vec[cut:].mean()))
        eps_w = partition_epsilon(n, cut, cfg.alpha_warning)
        eps_d = partition_epsilon(n, cut, cfg.alpha_drift)
        if gap >= eps_d:
            return DriftVerdict(DRIFT, cut, gap, eps_w, eps_d)
        if gap >= eps_w:
            return DriftVerdict(WARNING, cut, gap, eps_w, eps_d)
    if first_cut is not None:
        gap = abs(float(vec[:first_cut].mean()) - float(vec[first_cut:].mean()))
        return DriftVerdict(STABLE, first_cut, gap,
                            partition_epsilon(n, first_cut, cfg.alpha_warning),
                            partition_epsilon(n, first_cut, cfg.alpha_drift))
    mid = max(1, n // 2)
    return DriftVerdict(STABLE, None, 0.0,
                        partition_epsilon(n, mid, cfg.alpha_warning),
                        partition_epsilon(n, mid, cfg.alpha_drift))


class WarningBuffer:
    """Batches accumulated during the warning phase, consumed on drift."""

    def __init__(self):
        self.batches: list = []

    def update(self, state: str, batch_data) -> list:
        """Apply one verdict; returns the replay set when a drift fires."""
        if state == WARNING:
            self.batches.append(batch_data)
            return []
        if state == DRIFT:
            consumed = self.batches
            self.batches = []
            return consumed
        self.batches = []
        return []

    def __len__(self):
        return len(self.batches)
