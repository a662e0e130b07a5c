"""NS statistics and structural surgery on the evolving network."""
import math

import numpy as np
import pytest

from driftlearn.errors import ConfigError, StructuralError, TrainingError
from driftlearn.extractor import ExtractorConfig, FeatureExtractor
from driftlearn.layers import ACTIVATIONS
from driftlearn.growth import (
    NsState,
    estimate_bias_variance,
    kappa,
    maybe_grow,
    maybe_prune,
    xi,
)
from driftlearn.network import EvolvingNetwork


def make_net(seed=0, u=6, n_classes=3, width=None, passthrough=True):
    rng = np.random.default_rng(seed)
    ext = FeatureExtractor(ExtractorConfig(passthrough=passthrough,
                                           conv1d_channels=[(u, 8), (8, 5)]),
                           u, rng=rng)
    return EvolvingNetwork(ext, n_classes, rng=rng, initial_width=width)


# ---------------------------------------------------------------- kappa / xi


def test_kappa_at_zero_is_two():
    assert kappa(0.0) == 2.0


def test_kappa_at_one_matches_hand_value():
    # 1.25/e + 0.75, evaluated independently
    expected = 1.25 * 0.36787944117144233 + 0.75
    assert abs(kappa(1.0) - expected) < 1e-12
    assert abs(kappa(1.0) - 1.2098493014643029) < 1e-9


def test_xi_at_zero_doubles_to_four():
    assert xi(0.0) == 2.0
    assert 2.0 * xi(0.0) == 4.0


@pytest.mark.parametrize("arg", [0.0, 0.01, 0.5, 1.0, 5.0, 50.0, 1e6])
def test_kappa_xi_bounds(arg):
    for fn in (kappa, xi):
        assert 0.75 <= fn(arg) <= 2.0
        if arg <= 30.0:  # huge args underflow to exactly 0.75 in 64-bit
            assert fn(arg) > 0.75


# ---------------------------------------------------------------- estimators


def test_variance_zero_when_x_equals_mean():
    net = make_net()
    ns = NsState()
    mu = np.linspace(0.0, 1.0, 6)
    ns.ingest(mu, 0.0, 0.0)  # seeds the mean
    y = np.array([1.0, 0.0, 0.0])
    bias2, variance = estimate_bias_variance(net, ns, mu, y)
    assert variance == 0.0
    assert bias2 > 0.0


def test_bias_zero_when_prediction_matches_target():
    net = make_net(seed=1)
    ns = NsState()
    mu = np.linspace(-1.0, 1.0, 6)
    ns.ingest(mu, 0.0, 0.0)
    y = net.classify_features(mu[None, :])[0]
    bias2, _ = estimate_bias_variance(net, ns, mu, y)
    assert bias2 < 1e-24


def test_estimates_match_direct_recomputation():
    net = make_net(seed=2)
    ns = NsState()
    mu = np.full(6, 0.25)
    ns.ingest(mu, 0.0, 0.0)
    x = np.linspace(0.3, 0.9, 6)
    y = np.array([0.0, 1.0, 0.0])
    bias2, variance = estimate_bias_variance(net, ns, x, y)
    f_mu = net.classify_features(mu[None, :])[0]
    f_x = net.classify_features(x[None, :])[0]
    assert abs(bias2 - sum((a - b) ** 2 for a, b in zip(f_mu, y))) < 1e-15
    assert abs(variance - sum((a - b) ** 2 for a, b in zip(f_x, f_mu))) < 1e-15


def test_bootstrap_sample_returns_zeros():
    net = make_net(seed=3)
    ns = NsState()
    assert estimate_bias_variance(net, ns, np.ones(6), np.eye(3)[0]) == (0.0, 0.0)


def test_feature_mean_modes():
    ewma = NsState(decay=0.9)
    cumulative = NsState(cumulative=True)
    for ns in (ewma, cumulative):
        ns.ingest(np.array([2.0]), 0.0, 0.0)
        ns.ingest(np.array([4.0]), 0.1, 0.1)
    assert abs(ewma.feature_mean[0] - (0.9 * 2.0 + 0.1 * 4.0)) < 1e-15
    assert abs(cumulative.feature_mean[0] - 3.0) < 1e-15


# ---------------------------------------------------------------- SPC triggers


def feed(ns, bias_values, var_values=None):
    var_values = var_values if var_values is not None else [0.0] * len(bias_values)
    flags = []
    for i, (b, v) in enumerate(zip(bias_values, var_values)):
        ns.ingest(np.zeros(2), b * b, v * v)
        if i == 0:
            continue  # bootstrap sample seeds the mean only
        flags.append((maybe_grow(ns), maybe_prune(ns)))
    return flags


def test_equal_stats_above_one_kappa_do_not_fire():
    ns = NsState()
    s = ns.bias_stat
    s.wf.n = 10
    s.wf.mean = 0.4
    s.wf.m2 = 10 * 0.4 ** 2  # std 0.4
    s.mu_min, s.sigma_min = 0.4, 0.4
    assert kappa(s.wf.mean ** 2) > 1.0
    assert not maybe_grow(ns)


def test_zero_statistics_never_grow_or_prune():
    ns = NsState()
    flags = feed(ns, [0.0] * 50)
    assert all(flag == (False, False) for flag in flags)


def test_grow_fires_on_bias_jump_and_resets_min():
    rng = np.random.default_rng(0)
    ns = NsState()
    calm = list(0.1 + 0.01 * rng.standard_normal(200))
    jump = [0.5] * 50
    fired = []
    for i, b in enumerate(calm + jump):
        ns.ingest(np.zeros(2), b * b, 0.0)
        if i == 0:
            continue
        if maybe_grow(ns):
            fired.append(i)
    # a fire lands within one batch (50 samples) of the jump at index 200
    assert any(200 <= f < 250 for f in fired)
    s = ns.bias_stat
    assert s.mu_min <= s.wf.mean and s.sigma_min <= s.wf.std


def test_prune_guarded_right_after_reset():
    rng = np.random.default_rng(1)
    ns = NsState()
    for i, v in enumerate(0.2 + 0.02 * rng.standard_normal(100)):
        ns.ingest(np.zeros(2), 0.0, v * v)
        if i:
            maybe_prune(ns)
    ns.var_stat.reset_min()
    ns.ingest(np.zeros(2), 0.0, ns.var_stat.wf.mean ** 2)
    assert not maybe_prune(ns)


def test_min_tracking_is_monotone_until_reset():
    ns = NsState()
    mins = []
    for v in [0.5, 0.4, 0.3, 0.35, 0.6]:  # first value only seeds the mean
        ns.ingest(np.zeros(2), v * v, 0.0)
        mins.append(ns.bias_stat.mu_min)
    # running means: 0.4, 0.35, 0.35, 0.4125 -> minima freeze at 0.35
    assert np.allclose(mins[1:], [0.4, 0.35, 0.35, 0.35], atol=1e-12)


# ---------------------------------------------------------------- surgery


def test_initial_width_defaults_to_class_count():
    net = make_net()
    assert net.last_width == 3
    assert net.depth == 0 + 1 + 1  # passthrough extractor, one hidden, head


def test_grow_widens_and_head_follows():
    net = make_net(width=5)
    assert net.last_width == 5
    net.grow_node(batch=0, sample=0)
    assert net.last_width == 6
    assert net.head.n_in == 6
    out = net.classify_features(np.zeros((2, 6)))
    assert out.shape == (2, 3)


def test_prune_zero_outgoing_node_keeps_function():
    net = make_net(seed=4, width=4)
    net.head.weights[2, :] = 0.0
    x = np.random.default_rng(5).normal(size=(10, 6))
    before = net.classify_features(x)
    net.prune_node(2, batch=0, sample=0)
    after = net.classify_features(x)
    assert np.max(np.abs(after - before)) == 0.0


def test_grow_changes_output_within_xavier_bound():
    net = make_net(seed=6)
    x = np.random.default_rng(7).normal(size=(1, 6))
    before = net.classify_features(x)
    net.grow_node(batch=0, sample=0)
    after = net.classify_features(x)
    act_fn = ACTIVATIONS[net.hidden[-1].activation][0]
    new_act = act_fn(
        x @ net.hidden[-1].weights[:, -1:] + net.hidden[-1].bias[-1]).item()
    delta_logit = abs(new_act) * np.max(np.abs(net.head.weights[-1, :]))
    assert np.max(np.abs(after - before)) <= 2.0 * delta_logit + 1e-12


def test_prune_width_one_is_structural_error():
    net = make_net(seed=8, width=2)
    net.prune_node(0, batch=0, sample=0)
    with pytest.raises(StructuralError):
        net.prune_node(0, batch=0, sample=1)


def test_prune_target_is_least_contributing_node():
    net = make_net(seed=9, u=3, width=3)
    net.hidden[0].weights = np.diag([0.9, 0.01, 0.5])
    net.hidden[0].bias = np.zeros(3)
    net.head.weights = np.ones((3, 3))
    assert net.select_prune_target(np.ones((4, 3))) == 1


def test_add_layer_appends_and_reinitializes_head():
    net = make_net(seed=10)
    old_head = net.head
    net.grow_node(0, 0)  # width 4 so the new layer's fan-in differs from m
    event = net.add_layer(batch=7)
    assert event.kind == "layer_added"
    assert len(net.hidden) == 2
    # The new layer inherits the width of the layer it displaced.
    assert net.hidden[1].n_in == 4 and net.hidden[1].n_out == 4
    assert net.head is not old_head and net.head.n_in == 4
    assert net.depth_log == [(7, "layer_added")]
    out = net.classify_features(np.zeros((1, 6)))
    assert out.shape == (1, 3)


def test_add_layer_explicit_width_and_velocity_reset():
    net = make_net(seed=12)
    net.hidden[0].vel_w[...] = 5.0
    net.add_layer(batch=1, width=7)
    assert net.hidden[1].n_out == 7 and net.head.n_in == 7
    assert np.all(net.hidden[0].vel_w == 0.0)


def test_depth_never_decreases_and_width_floor():
    net = make_net(seed=11)
    depths = [net.depth]
    net.add_layer(0)
    depths.append(net.depth)
    net.grow_node(1, 0)
    net.prune_node(0, 1, 1)
    depths.append(net.depth)
    assert depths == sorted(depths)
    assert net.last_width >= 1


# ---------------------------------------------------------------- training plumbing


def test_backward_step_rate_count_mismatch():
    net = make_net(seed=12)
    net.forward_train(np.zeros((2, 6)))
    with pytest.raises(ConfigError):
        net.backward_step(np.eye(3)[:2], hidden_rates=[0.01, 0.01],
                          head_rate=0.02, extractor_rate=0.02, momentum=0.9)


def test_zero_rates_leave_parameters_bitwise_identical():
    net = make_net(seed=13, passthrough=False)
    x = np.random.default_rng(14).normal(size=(3, 6))
    snapshot = net.canonical_json()
    net.forward_train(x)
    net.backward_step(np.eye(3)[[0, 1, 2]], hidden_rates=[0.0],
                      head_rate=0.0, extractor_rate=0.0, momentum=0.95)
    assert net.canonical_json() == snapshot


def test_non_finite_gradient_raises_with_layer_index():
    net = make_net(seed=15)
    net.hidden[0].weights[0, 0] = np.nan
    net.forward_train(np.ones((1, 6)))
    with pytest.raises(TrainingError) as err:
        net.backward_step(np.eye(3)[:1], hidden_rates=[0.01],
                          head_rate=0.02, extractor_rate=0.02, momentum=0.9)
    assert err.value.layer_index is not None


def test_training_reduces_loss_on_fixed_batch():
    net = make_net(seed=16, passthrough=False)
    rng = np.random.default_rng(17)
    x = rng.normal(size=(20, 6))
    labels = rng.integers(0, 3, size=20)
    targets = np.eye(3)[labels]
    first = None
    last = None
    for _ in range(60):
        probs, _ = net.forward_train(x)
        loss = net.backward_step(targets, hidden_rates=[0.02],
                                 head_rate=0.02, extractor_rate=0.02, momentum=0.9)
        first = loss if first is None else first
        last = loss
    assert last < first


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_bit_exact():
    net = make_net(seed=18, passthrough=False)
    rng = np.random.default_rng(19)
    x = rng.normal(size=(8, 6))
    targets = np.eye(3)[rng.integers(0, 3, size=8)]
    net.forward_train(x)
    net.backward_step(targets, [0.01], 0.02, 0.02, 0.9)
    net.grow_node(0, 3)
    net.add_layer(1)
    for i in range(5):
        net.ns.ingest(rng.normal(size=6), 0.1, 0.2)
    clone = EvolvingNetwork.from_state(net.to_state())
    assert clone.checkpoint_hash() == net.checkpoint_hash()
    probe = rng.normal(size=(4, net.extractor.feature_width))
    assert np.array_equal(clone.classify_features(probe), net.classify_features(probe))
    assert clone.depth_log == net.depth_log
    assert clone.ns.count == net.ns.count


def test_checkpoint_file_round_trip(tmp_path):
    net = make_net(seed=20)
    path = tmp_path / "ckpt.json"
    net.save_checkpoint(path)
    clone = EvolvingNetwork.load_checkpoint(path)
    assert clone.checkpoint_hash() == net.checkpoint_hash()


def test_forward_valid_after_every_surgery_kind():
    net = make_net(seed=21)
    x = np.ones((2, 6))
    net.grow_node(0, 0)
    net.classify_features(x)
    net.prune_node(0, 0, 1)
    net.classify_features(x)
    net.add_layer(1)
    out = net.classify_features(x)
    assert np.all(np.isfinite(out))
