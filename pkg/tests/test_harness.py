"""Prequential loop: scoring, drift response, determinism, causality."""
import csv
import json

import numpy as np
import pytest

from driftlearn.errors import ConfigError, DimensionError
from driftlearn.extractor import ExtractorConfig, FeatureExtractor
from driftlearn.harness import (
    MetricsRecord,
    OnlineLearner,
    one_hot,
    run_one_step_ahead,
    run_prequential,
    summarize_runs,
    write_metrics_csv,
    write_summary_json,
)
from driftlearn.network import EvolvingNetwork
from driftlearn.streams import StreamBatch, SyntheticDriftConfig, generate_stream


def make_learner(seed, n_classes=3, **kwargs):
    rng = np.random.default_rng([seed, 7])
    ext = FeatureExtractor(ExtractorConfig(), 48, rng=rng)
    return OnlineLearner(EvolvingNetwork(ext, n_classes, rng=rng), **kwargs)


DRIFT_CFG = SyntheticDriftConfig(
    n_batches=18, drift_schedule=((10, "abrupt"),), seed=2, drift_style="remap"
)


@pytest.fixture(scope="module")
def drift_records():
    return run_prequential(make_learner(2), generate_stream(DRIFT_CFG))


@pytest.fixture(scope="module")
def drift_records_no_replay():
    learner = make_learner(2, replay=False)
    return run_prequential(learner, generate_stream(DRIFT_CFG))


# ---------------------------------------------------------------- learning


def test_stationary_stream_learns_without_drift_verdicts():
    stream = generate_stream(SyntheticDriftConfig(n_batches=30, seed=1))
    records = run_prequential(make_learner(1), stream)
    assert all(r.drift_state != "drift" for r in records)
    assert all(r.depth == records[0].depth for r in records)
    tail = records[10:]
    correct = sum(round(r.accuracy * r.size) for r in tail)
    assert correct / sum(r.size for r in tail) >= 0.95


def test_shuffled_labels_sit_at_chance():
    stream = generate_stream(SyntheticDriftConfig(n_batches=20, seed=5))
    rng = np.random.default_rng(99)
    for batch in stream:
        rng.shuffle(batch.labels)
    records = run_prequential(make_learner(5), stream)
    assert abs(records[-1].cumulative_accuracy - 1 / 3) < 0.05


def test_cumulative_accuracy_is_the_exact_running_ratio():
    stream = generate_stream(SyntheticDriftConfig(n_batches=8, seed=3))
    learner = make_learner(3)
    records = run_prequential(learner, stream)
    seen = correct = 0
    for r in records:
        seen += r.size
        correct += round(r.accuracy * r.size)
        assert r.cumulative_accuracy == correct / seen
    assert learner.total_seen == seen and learner.total_correct == correct


def test_truncated_final_batch_scored_at_actual_size():
    stream = generate_stream(
        SyntheticDriftConfig(n_batches=3, batch_size=50, seed=4)
    )
    short = stream[2]
    stream[2] = StreamBatch(short.index, short.sensors[:20], short.labels[:20])
    records = run_prequential(make_learner(4), stream)
    assert [r.size for r in records] == [50, 50, 20]


# ---------------------------------------------------------------- drift path


def test_depth_never_decreases_and_additions_coincide_with_drift(drift_records):
    depths = [r.depth for r in drift_records]
    assert depths == sorted(depths)
    added = [r for r in drift_records if r.layer_added]
    assert added and all(r.drift_state == "drift" for r in added)
    assert any(r.batch == 10 for r in added)


def test_replay_counter_reports_samples(drift_records, drift_records_no_replay):
    at_drift = next(r for r in drift_records if r.layer_added)
    assert at_drift.replayed > 0
    assert all(r.replayed == 0 for r in drift_records_no_replay)


def test_drift_warmup_records_verdict_but_blocks_surgery():
    learner = make_learner(2, drift_warmup=30)
    records = run_prequential(learner, generate_stream(DRIFT_CFG))
    assert any(r.drift_state == "drift" for r in records)
    assert not any(r.layer_added for r in records)
    assert all(r.depth == records[0].depth for r in records)


def test_evolve_off_keeps_structure_frozen():
    learner = make_learner(2, evolve=False)
    records = run_prequential(learner, generate_stream(DRIFT_CFG))
    assert all(r.depth == records[0].depth for r in records)
    assert all(r.width == records[0].width for r in records)
    assert all(r.grown == 0 and r.pruned == 0 for r in records)


# ---------------------------------------------------------------- invariants


def test_fixed_seed_reproduces_metrics_bit_exactly():
    stream = generate_stream(
        SyntheticDriftConfig(n_batches=12, drift_schedule=((6, "abrupt"),),
                             seed=8, drift_style="remap")
    )
    rows_a = [r.to_row() for r in run_prequential(make_learner(8), stream)]
    rows_b = [r.to_row() for r in run_prequential(make_learner(8), stream)]
    assert rows_a == rows_b


def test_checkpoint_hash_ignores_batches_not_yet_seen():
    stream_a = generate_stream(SyntheticDriftConfig(n_batches=8, seed=6))
    stream_b = [
        StreamBatch(b.index, b.sensors.copy(), b.labels.copy()) for b in stream_a
    ]
    rng = np.random.default_rng(1)
    for batch in stream_b[4:]:
        rng.shuffle(batch.labels)
    learner_a, learner_b = make_learner(6), make_learner(6)
    matches = []
    for a, b in zip(stream_a, stream_b):
        learner_a.predict_batch(a.sensors)
        learner_a.observe_labels(a.labels)
        learner_b.predict_batch(b.sensors)
        learner_b.observe_labels(b.labels)
        matches.append(learner_a.checkpoint_hash() == learner_b.checkpoint_hash())
    assert matches[:4] == [True] * 4
    assert matches[4:] == [False] * 4


# ---------------------------------------------------------------- modes


def test_one_step_ahead_needs_at_least_two_batches():
    stream = generate_stream(SyntheticDriftConfig(n_batches=1, seed=0))
    with pytest.raises(ConfigError):
        run_one_step_ahead(make_learner(0), stream)


def test_one_step_ahead_scores_all_but_the_last_batch():
    stream = generate_stream(SyntheticDriftConfig(n_batches=2, seed=0))
    records = run_one_step_ahead(make_learner(0), stream)
    assert len(records) == 1


def test_one_step_ahead_equals_current_batch_on_constant_labels():
    stream = generate_stream(SyntheticDriftConfig(n_batches=6, seed=4))
    const = [
        StreamBatch(b.index, b.sensors, np.zeros_like(b.labels)) for b in stream
    ]
    current = run_prequential(make_learner(4), const[:-1])
    ahead = run_one_step_ahead(make_learner(4), const)
    for cur, osa in zip(current, ahead):
        assert cur.accuracy == osa.accuracy
        assert cur.cumulative_accuracy == osa.cumulative_accuracy


def test_one_step_ahead_trims_to_the_shorter_batch():
    stream = generate_stream(SyntheticDriftConfig(n_batches=3, seed=4))
    tail = stream[2]
    stream[2] = StreamBatch(tail.index, tail.sensors[:15], tail.labels[:15])
    records = run_one_step_ahead(make_learner(4), stream)
    assert [r.size for r in records] == [50, 15]


def test_empty_stream_is_a_config_error():
    with pytest.raises(ConfigError):
        run_prequential(make_learner(0), [])


# ---------------------------------------------------------------- contracts


def test_observe_without_pending_prediction_raises():
    with pytest.raises(ConfigError):
        make_learner(0).observe_labels(np.zeros(5, dtype=np.int64))


def test_label_count_mismatch_raises():
    learner = make_learner(0)
    learner.predict_batch(np.zeros((4, 48)))
    with pytest.raises(DimensionError):
        learner.observe_labels(np.zeros(5, dtype=np.int64))


def test_out_of_range_label_raises():
    learner = make_learner(0)
    learner.predict_batch(np.zeros((4, 48)))
    with pytest.raises(DimensionError):
        learner.observe_labels(np.array([0, 1, 2, 3]))


@pytest.mark.parametrize(
    "kwargs",
    [{"epochs": 0}, {"drift_warmup": -1}, {"lr_floor": 0.05, "lr_cap": 0.02}],
)
def test_learner_rejects_bad_knobs(kwargs):
    with pytest.raises(ConfigError):
        make_learner(0, **kwargs)


def test_one_hot_layout():
    out = one_hot(np.array([2, 0]), 3)
    assert out.tolist() == [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]


# ---------------------------------------------------------------- reporting


def fake_record(batch, cum, drift_state="stable"):
    return MetricsRecord(
        batch=batch, size=50, accuracy=cum, cumulative_accuracy=cum,
        precision=(1.0, 0.5, 0.0), recall=(0.9, 0.4, 0.0), f1=(0.95, 0.44, 0.0),
        depth=5, width=3, drift_state=drift_state,
    )


def test_metrics_csv_round_trips(tmp_path, drift_records):
    path = tmp_path / "metrics.csv"
    write_metrics_csv(drift_records, path)
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(drift_records)
    for row, rec in zip(rows, drift_records):
        assert float(row["accuracy"]) == rec.accuracy
        assert float(row["cumulative_accuracy"]) == rec.cumulative_accuracy
        assert int(row["depth"]) == rec.depth
        assert row["drift_state"] == rec.drift_state
    assert "precision_2" in rows[0] and "f1_0" in rows[0]


def test_write_metrics_csv_rejects_empty(tmp_path):
    with pytest.raises(ConfigError):
        write_metrics_csv([], tmp_path / "empty.csv")


def test_summary_uses_sample_std():
    runs = [
        [fake_record(0, 0.8)],
        [fake_record(0, 0.9, drift_state="drift")],
    ]
    summary = summarize_runs(runs)
    assert summary["runs"] == 2
    assert abs(summary["accuracy"]["mean"] - 0.85) < 1e-12
    assert abs(summary["accuracy"]["std"] - 0.07071067811865478) < 1e-12
    assert summary["drifts"]["values"] == [0.0, 1.0]


def test_summary_single_run_has_zero_std():
    summary = summarize_runs([[fake_record(0, 0.9)]])
    assert summary["accuracy"]["std"] == 0.0


def test_summary_json_round_trips(tmp_path):
    path = tmp_path / "summary.json"
    summary = summarize_runs([[fake_record(0, 0.75)]])
    write_summary_json(summary, path)
    with open(path, encoding="utf-8") as fh:
        loaded = json.load(fh)
    assert loaded["accuracy"]["mean"] == 0.75


def test_summarize_rejects_no_runs():
    with pytest.raises(ConfigError):
        summarize_runs([])
