"""Prequential test-then-train loop over a batch stream.

Per batch, in order: predict every sample with the current model, score
against the true labels, assess the batch error vector for drift, react
(buffer on warning; insert a layer and replay on drift), derive the
per-layer rate plan from the prediction-phase activations, then train
one pass in arrival order with per-sample grow/prune checks and memory
admission. Labels are never visible before the prediction is scored.

Two scoring modes share this loop: current-batch predicts the labels of
the batch it just saw; one-step-ahead predicts the labels of the next
batch from the current batch's inputs, so the final batch goes unscored.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .drift import DRIFT, DriftConfig, WarningBuffer, assess
from .errors import ConfigError, DimensionError
from .forgetting import RATE_CAP, RATE_FLOOR, plan_for_batch
from .growth import estimate_bias_variance, maybe_grow, maybe_prune
from .memory import GaussianEnvelope, MemoryStore, update_and_admit
from .network import EvolvingNetwork
from .streams import StreamBatch


def one_hot(labels: np.ndarray, n_classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class MetricsRecord:
    """Everything observable about one scored batch."""

    batch: int
    size: int
    accuracy: float
    cumulative_accuracy: float
    precision: tuple
    recall: tuple
    f1: tuple
    depth: int
    width: int
    drift_state: str
    grown: int = 0
    pruned: int = 0
    layer_added: bool = False
    replayed: int = 0

    def to_row(self) -> dict:
        row = {
            "batch": self.batch,
            "size": self.size,
            "accuracy": repr(self.accuracy),
            "cumulative_accuracy": repr(self.cumulative_accuracy),
        }
        for name, values in (
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ):
            for c, v in enumerate(values):
                row[f"{name}_{c}"] = repr(v)
        row.update(
            depth=self.depth,
            width=self.width,
            drift_state=self.drift_state,
            grown=self.grown,
            pruned=self.pruned,
            layer_added=int(self.layer_added),
            replayed=self.replayed,
        )
        return row


def _per_class_scores(confusion: np.ndarray):
    diag = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    precision = np.where(pred_totals > 0, diag / np.maximum(pred_totals, 1), 0.0)
    recall = np.where(true_totals > 0, diag / np.maximum(true_totals, 1), 0.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    return tuple(precision), tuple(recall), tuple(f1)


class OnlineLearner:
    """Stateful wrapper tying the network to drift handling and memory.

    ``predict_batch`` and ``observe_labels`` split the prequential step
    in two so that a caller holding labels back (or serving them over a
    wire) drives the exact same loop as the batch runners below.

    Drift verdicts raised during the first ``drift_warmup`` batches are
    recorded but trigger no layer insertion or replay: a half-trained
    model's error vector rises and falls for reasons that have nothing
    to do with the stream.
    """

    def __init__(
        self,
        network: EvolvingNetwork,
        *,
        drift: Optional[DriftConfig] = None,
        memory_capacity: int = 500,
        lr_floor: float = RATE_FLOOR,
        lr_cap: float = RATE_CAP,
        momentum: float = 0.95,
        epochs: int = 1,
        soft_forgetting: bool = True,
        evolve: bool = True,
        replay: bool = True,
        drift_warmup: int = 5,
    ):
        if epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if drift_warmup < 0:
            raise ConfigError("drift_warmup must be >= 0")
        if not 0.0 < lr_floor <= lr_cap:
            raise ConfigError("need 0 < lr_floor <= lr_cap")
        self.net = network
        self.drift_cfg = drift if drift is not None else DriftConfig()
        self.buffer = WarningBuffer()
        self.envelope = GaussianEnvelope(network.extractor.feature_width)
        self.store = MemoryStore(memory_capacity)
        self.lr_floor = lr_floor
        self.lr_cap = lr_cap
        self.momentum = momentum
        self.epochs = epochs
        self.soft_forgetting = soft_forgetting
        self.evolve = evolve
        self.replay = replay
        self.drift_warmup = drift_warmup
        m = network.n_classes
        self.confusion = np.zeros((m, m), dtype=np.int64)
        self.total_seen = 0
        self.total_correct = 0
        self.batch_counter = 0
        self._pending = None

    # ------------------------------------------------------------ predict

    def predict_batch(self, sensors=None, images=None):
        """Score-ready prediction; caches activations for the train phase."""
        probs, feats, acts = self.net.predict(sensors, images)
        preds = probs.argmax(axis=1)
        self._pending = {
            "sensors": sensors,
            "images": images,
            "probs": probs,
            "preds": preds,
            "feats": feats,
            "acts": acts,
        }
        return probs, preds

    def checkpoint_hash(self) -> str:
        return self.net.checkpoint_hash()

    # ------------------------------------------------------------- train

    def _rate_plan(self, acts, probs):
        n_hidden = len(self.net.hidden)
        if not self.soft_forgetting or probs.shape[0] < 2:
            return [self.lr_cap] * n_hidden, self.lr_cap
        plan = plan_for_batch(acts, probs, self.lr_floor, self.lr_cap)
        hidden = list(plan.hidden_rates)
        while len(hidden) < n_hidden:
            hidden.append(self.lr_cap)  # layers inserted this batch
        return hidden, plan.head_rate

    def _replay_all(self, consumed) -> int:
        count = 0
        if len(self.store):
            feats = self.store.feature_matrix()
            targets = one_hot(self.store.labels(), self.net.n_classes, self.net.dtype)
            self.net.train_features_pass(feats, targets, self.lr_cap, self.momentum)
            count += feats.shape[0]
        for sensors, images, labels in consumed:
            feats = self.net.extractor.extract(sensors, images)
            targets = one_hot(labels, self.net.n_classes, self.net.dtype)
            self.net.train_features_pass(feats, targets, self.lr_cap, self.momentum)
            count += feats.shape[0]
        return count

    def observe_labels(self, labels) -> MetricsRecord:
        """Reveal the labels for the pending prediction; score, adapt, train."""
        if self._pending is None:
            raise ConfigError("observe_labels called with no pending prediction")
        pend = self._pending
        self._pending = None
        labels = np.asarray(labels, dtype=np.int64)
        n = pend["preds"].shape[0]
        if labels.shape[0] != n:
            raise DimensionError(
                f"{labels.shape[0]} labels for {n} predicted samples"
            )
        if labels.min() < 0 or labels.max() >= self.net.n_classes:
            raise DimensionError(
                f"labels outside [0, {self.net.n_classes})"
            )
        batch_idx = self.batch_counter
        self.batch_counter += 1

        errors = (pend["preds"] != labels).astype(np.int64)
        correct = int(n - errors.sum())
        self.total_seen += n
        self.total_correct += correct
        np.add.at(self.confusion, (labels, pend["preds"]), 1)

        verdict = assess(errors, self.drift_cfg)
        consumed = self.buffer.update(
            verdict.state, (pend["sensors"], pend["images"], labels)
        )
        layer_added = False
        replayed = 0
        if verdict.state == DRIFT and batch_idx >= self.drift_warmup:
            if self.evolve:
                self.net.add_layer(batch_idx)
                layer_added = True
            if self.replay:
                replayed = self._replay_all(consumed)

        hidden_rates, head_rate = self._rate_plan(pend["acts"], pend["probs"])
        grown, pruned = self._train_batch(
            pend, labels, batch_idx, hidden_rates, head_rate
        )

        precision, recall, f1 = _per_class_scores(self.confusion)
        return MetricsRecord(
            batch=batch_idx,
            size=n,
            accuracy=correct / n,
            cumulative_accuracy=self.total_correct / self.total_seen,
            precision=precision,
            recall=recall,
            f1=f1,
            depth=self.net.depth,
            width=self.net.last_width,
            drift_state=verdict.state,
            grown=grown,
            pruned=pruned,
            layer_added=layer_added,
            replayed=replayed,
        )

    def _train_batch(self, pend, labels, batch_idx, hidden_rates, head_rate):
        sensors, images = pend["sensors"], pend["images"]
        targets = one_hot(labels, self.net.n_classes, self.net.dtype)
        grown = pruned = 0
        for _ in range(self.epochs):
            for i in range(labels.shape[0]):
                x = None if sensors is None else sensors[i : i + 1]
                img = None if images is None else images[i : i + 1]
                probs, feats = self.net.forward_train(x, img)
                bias2, var = estimate_bias_variance(
                    self.net, self.net.ns, feats[0], targets[i], probs_x=probs[0]
                )
                self.net.ns.ingest(feats[0], bias2, var)
                surgery = False
                if self.evolve:
                    if maybe_grow(self.net.ns):
                        self.net.grow_node(batch_idx, i)
                        grown += 1
                        surgery = True
                    elif maybe_prune(self.net.ns) and self.net.last_width > 1:
                        target = self.net.select_prune_target(pend["feats"])
                        self.net.prune_node(target, batch_idx, i)
                        pruned += 1
                        surgery = True
                if surgery:
                    probs, feats = self.net.forward_train(x, img)
                self.net.backward_step(
                    targets[i : i + 1], hidden_rates, head_rate,
                    self.lr_floor, self.momentum,
                )
                update_and_admit(
                    self.envelope, self.store, feats[0], probs[0],
                    int(labels[i]), batch=batch_idx,
                )
        return grown, pruned


# --------------------------------------------------------------------------
# Batch runners
# --------------------------------------------------------------------------


def run_prequential(
    learner: OnlineLearner, batches: Sequence[StreamBatch]
) -> list[MetricsRecord]:
    """Current-batch mode: predict, score, and train on each batch in turn."""
    if not batches:
        raise ConfigError("empty stream")
    records = []
    for batch in batches:
        learner.predict_batch(batch.sensors, batch.images)
        records.append(learner.observe_labels(batch.labels))
    return records


def run_one_step_ahead(
    learner: OnlineLearner, batches: Sequence[StreamBatch]
) -> list[MetricsRecord]:
    """Predict batch k+1's labels from batch k's inputs; last batch unscored.

    When consecutive batches differ in size (a truncated tail), the pair
    is trimmed to the shorter length.
    """
    if len(batches) < 2:
        raise ConfigError("one-step-ahead mode needs at least 2 batches")
    records = []
    for cur, nxt in zip(batches, batches[1:]):
        n = min(len(cur), len(nxt))
        sensors = cur.sensors[:n]
        images = None if cur.images is None else cur.images[:n]
        learner.predict_batch(sensors, images)
        records.append(learner.observe_labels(nxt.labels[:n]))
    return records


# --------------------------------------------------------------------------
# Reporting
# --------------------------------------------------------------------------


def write_metrics_csv(records: Sequence[MetricsRecord], path) -> None:
    if not records:
        raise ConfigError("no records to write")
    rows = [r.to_row() for r in records]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std, "values": arr.tolist()}


def summarize_runs(runs: Sequence[Sequence[MetricsRecord]]) -> dict:
    """Aggregate repeated seeded runs into mean-and-std blocks."""
    if not runs:
        raise ConfigError("no runs to summarize")
    finals = [run[-1] for run in runs]
    drifts = [sum(1 for r in run if r.drift_state == DRIFT) for run in runs]
    return {
        "runs": len(runs),
        "batches": [len(run) for run in runs],
        "accuracy": _mean_std([f.cumulative_accuracy for f in finals]),
        "depth": _mean_std([f.depth for f in finals]),
        "width": _mean_std([f.width for f in finals]),
        "drifts": _mean_std(drifts),
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
