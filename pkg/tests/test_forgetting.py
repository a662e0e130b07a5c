"""Soft-forgetting rate computation."""
import math

import numpy as np
import pytest

from driftlearn.errors import DomainError
from driftlearn.forgetting import (
    RATE_CAP,
    RATE_FLOOR,
    layer_correlation,
    plan_for_batch,
    rate_from_correlation,
    rates_from_correlation,
)


def textbook_pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def test_identical_series_correlate_fully():
    series = np.array([[1.0], [2.0], [5.0], [3.0]])
    assert abs(layer_correlation(series, series) - 1.0) < 1e-12


def test_constant_activations_give_zero():
    h = np.full((6, 3), 2.5)
    y = np.random.default_rng(0).normal(size=(6, 2))
    assert layer_correlation(h, y) == 0.0


def test_matches_textbook_pearson_on_hand_series():
    a = [1.0, 2.0, 3.0, 4.0]
    b = [1.0, 3.0, 2.0, 4.0]
    expected = abs(textbook_pearson(a, b))
    got = layer_correlation(np.array(a)[:, None], np.array(b)[:, None])
    assert abs(got - expected) < 1e-12


def test_mixed_pairs_average_absolute_values():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    h = np.stack([a, -a], axis=1)  # one perfectly pro-, one anti-correlated node
    y = a[:, None]
    assert abs(layer_correlation(h, y) - 1.0) < 1e-12


def test_single_row_rejected():
    with pytest.raises(DomainError):
        layer_correlation(np.ones((1, 2)), np.ones((1, 2)))


def test_rho_one_trains_at_cap():
    assert rate_from_correlation(1.0) == RATE_CAP


def test_rho_half_matches_hand_value():
    # 0.02 / e, evaluated independently
    assert abs(rate_from_correlation(0.5) - 0.02 * 0.36787944117144233) < 1e-12
    assert abs(rate_from_correlation(0.5) - 0.0073575888234288465) < 1e-9


def test_tiny_rho_clamps_to_floor():
    # raw value 0.02*exp(-19) ~ 1.1e-10
    assert rate_from_correlation(0.05) == RATE_FLOOR
    assert rate_from_correlation(0.0) == RATE_FLOOR


def test_monotone_in_rho_before_clamping():
    grid = np.linspace(0.01, 1.0, 50)
    raw = [rate_from_correlation(r, floor=0.0) for r in grid]
    assert all(raw[i] <= raw[i + 1] for i in range(len(raw) - 1))


def test_all_rates_within_bounds():
    plan = rates_from_correlation([0.0, 0.03, 0.4, 0.8, 1.0])
    assert all(RATE_FLOOR <= r <= RATE_CAP for r in plan.rates)
    assert plan.head_rate == RATE_CAP
    assert len(plan.hidden_rates) == 5


def test_plan_for_batch_shapes():
    rng = np.random.default_rng(1)
    acts = [rng.normal(size=(10, 4)), rng.normal(size=(10, 3))]
    outputs = rng.normal(size=(10, 3))
    plan = plan_for_batch(acts, outputs)
    assert len(plan.rates) == 3  # two hidden layers + head
    assert plan.rates[-1] == RATE_CAP
