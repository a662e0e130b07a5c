"""Batch sources: CSV ingestion and synthetic drifting streams.

Data arrives in fixed-size labeled batches. The CSV reader normalizes
features to [0, 1] with running min/max by default, so early batches are
scaled with no lookahead; a global two-pass mode is available when the
whole file may be scanned up front.

The synthetic generator draws class-conditional Gaussians whose means
move according to a drift schedule: abrupt drifts swap the concept
(mid-batch by default), gradual drifts interpolate the means over a few
batches. Everything is deterministic under the config seed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ParseError, SchemaError

DEFAULT_BATCH_SIZE = 50
NORMALIZATIONS = ("running", "global", "none")
GRADUAL_SPAN = 5
LABEL_COLUMN = "label"


@dataclass
class StreamBatch:
    """One batch of the stream: sensors, labels, optional image block."""

    index: int
    sensors: np.ndarray
    labels: np.ndarray
    images: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = self.sensors.shape[0]
        if self.labels.shape[0] != n:
            raise DimensionError(
                f"batch {self.index}: {n} sensor rows but "
                f"{self.labels.shape[0]} labels"
            )
        if self.images is not None and self.images.shape[0] != n:
            raise DimensionError(
                f"batch {self.index}: {n} sensor rows but "
                f"{self.images.shape[0]} images"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def _parse_header(header: list[str], path: str) -> list[int]:
    """Return the indices of the feature columns, keeping file order."""
    if LABEL_COLUMN not in header:
        raise SchemaError(f"{path}: no '{LABEL_COLUMN}' column in header")
    feature_idx = [i for i, name in enumerate(header) if name != LABEL_COLUMN]
    if not feature_idx:
        raise SchemaError(f"{path}: header has a label column but no features")
    return feature_idx


def _read_rows(path: str, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Parse the file into a raw feature matrix and a label vector.

    Row numbers in errors are absolute file lines (header is line 1);
    columns are 1-based.
    """
    features: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        feature_idx = _parse_header(header, path)
        label_idx = header.index(LABEL_COLUMN)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(
                    f"{path} line {line_no}: {len(row)} cells, "
                    f"header has {len(header)}"
                )
            values = []
            for col in feature_idx:
                try:
                    values.append(float(row[col]))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell {row[col]!r}",
                        row=line_no,
                        column=col + 1,
                    ) from None
            cell = row[label_idx].strip()
            try:
                label = int(cell)
            except ValueError:
                raise SchemaError(
                    f"{path} line {line_no}: label {cell!r} is not an integer"
                ) from None
            if not 0 <= label < n_classes:
                raise SchemaError(
                    f"{path} line {line_no}: label {label} outside "
                    f"[0, {n_classes})"
                )
            features.append(values)
            labels.append(label)
    if not features:
        raise SchemaError(f"{path}: no data rows")
    return np.asarray(features, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def _normalize_running(raw: np.ndarray) -> np.ndarray:
    """Min-max scale each row using the min/max seen up to and including it."""
    out = np.empty_like(raw)
    lo = raw[0].copy()
    hi = raw[0].copy()
    for i, row in enumerate(raw):
        np.minimum(lo, row, out=lo)
        np.maximum(hi, row, out=hi)
        span = hi - lo
        scaled = np.zeros_like(row)
        ok = span > 0
        scaled[ok] = (row[ok] - lo[ok]) / span[ok]
        out[i] = scaled
    return out


def _normalize_global(raw: np.ndarray) -> np.ndarray:
    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    out = np.zeros_like(raw)
    ok = span > 0
    out[:, ok] = (raw[:, ok] - lo[ok]) / span[ok]
    return out


def ingest_csv(
    path: str,
    *,
    batch_size: int = DEFAULT_BATCH_SIZE,
    normalization: str = "running",
    n_classes: int = 3,
) -> list[StreamBatch]:
    """Read a labeled CSV into batches of ``batch_size`` rows in file order.

    The header must contain a ``label`` column; every other column is a
    feature. Features are min-max scaled to [0, 1]: ``"running"`` (the
    default) updates per-column min/max row by row before scaling, so no
    value depends on later rows; ``"global"`` scans the whole file first;
    ``"none"`` leaves values as parsed. Constant columns scale to 0.

    The final batch may be shorter than ``batch_size``.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    raw, labels = _read_rows(path, n_classes)
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"unknown normalization {normalization!r}")
    if normalization == "running":
        scaled = _normalize_running(raw)
    elif normalization == "global":
        scaled = _normalize_global(raw)
    else:
        scaled = raw
    batches = []
    for k, start in enumerate(range(0, len(labels), batch_size)):
        stop = start + batch_size
        batches.append(StreamBatch(k, scaled[start:stop], labels[start:stop]))
    return batches


def write_stream_csv(batches: Sequence[StreamBatch], path: str) -> int:
    """Write sensor rows and labels as CSV (images are not serialized).

    Returns the number of rows written. Header is f0..f{u-1},label.
    """
    if not batches:
        raise ConfigError("nothing to write: empty batch list")
    u = batches[0].sensors.shape[1]
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(u)] + [LABEL_COLUMN])
        for batch in batches:
            for x, y in zip(batch.sensors, batch.labels):
                writer.writerow([repr(float(v)) for v in x] + [int(y)])
                rows += 1
    return rows


# --------------------------------------------------------------------------
# Synthetic drifting streams
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticDriftConfig:
    """Recipe for a Gaussian class stream with scheduled concept changes.

    Each concept assigns one mean per class; samples are that mean plus
    isotropic noise. ``separation`` is the target distance between any
    two class means in units of ``noise_std``, and also the distance a
    class mean travels when the concept changes. ``drift_schedule`` is a
    sequence of (batch index, kind) pairs with kind "abrupt" or
    "gradual"; each entry advances to the next auto-generated concept.
    """

    n_features: int = 48
    n_classes: int = 3
    n_batches: int = 60
    batch_size: int = DEFAULT_BATCH_SIZE
    drift_schedule: tuple = ()
    noise_std: float = 0.3
    separation: float = 8.0
    gradual_span: int = GRADUAL_SPAN
    abrupt_at_boundary: bool = False
    drift_style: str = "fresh"
    with_images: bool = False
    image_channels: int = 3
    image_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if self.n_batches < 1:
            raise ConfigError("n_batches must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.noise_std <= 0:
            raise ConfigError("noise_std must be positive")
        if self.separation <= 0:
            raise ConfigError("separation must be positive")
        if self.gradual_span < 1:
            raise ConfigError("gradual_span must be >= 1")
        if self.drift_style not in ("fresh", "remap", "orthogonal"):
            raise ConfigError(f"unknown drift_style {self.drift_style!r}")
        if (self.drift_style == "orthogonal"
                and self.n_features < (len(self.drift_schedule) + 1) * self.n_classes):
            raise ConfigError(
                "orthogonal style needs n_features >= n_concepts * n_classes"
            )
        if self.image_channels < 1 or self.image_size < 1:
            raise ConfigError("image dimensions must be positive")
        prev_end = 0
        for entry in self.drift_schedule:
            if len(entry) != 2:
                raise ConfigError(f"drift_schedule entry {entry!r} is not (batch, kind)")
            batch, kind = entry
            if kind not in ("abrupt", "gradual"):
                raise ConfigError(f"unknown drift kind {kind!r}")
            if not 1 <= batch < self.n_batches:
                raise ConfigError(
                    f"drift batch {batch} outside [1, {self.n_batches})"
                )
            if batch < prev_end:
                raise ConfigError(
                    f"drift at batch {batch} overlaps the previous transition"
                )
            prev_end = batch + (self.gradual_span if kind == "gradual" else 1)

    @property
    def n_concepts(self) -> int:
        return len(self.drift_schedule) + 1


def _remap(base: np.ndarray, n_concepts: int) -> np.ndarray:
    """Concept j reassigns class c the base parameters of class (c+j) mod m."""
    m = base.shape[0]
    return np.stack([base[(np.arange(m) + j) % m] for j in range(n_concepts)])


def concept_class_means(cfg: SyntheticDriftConfig) -> np.ndarray:
    """Class means per concept, shape [n_concepts, n_classes, n_features].

    Drawn from a dedicated generator so they can be recovered without
    materializing the stream. With drift_style "fresh" each concept gets
    independent means; "remap" keeps one mean set and rotates the class
    assignment, so a converged model is guaranteed to be wrong after the
    change; "orthogonal" makes every mean vector orthogonal to every
    other, across concepts too, so post-drift samples project to nothing
    along the directions the model has learned (the error spike is
    reliable) while old-concept geometry stays untouched for replay.
    """
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 17])
    scale = cfg.separation * cfg.noise_std / math.sqrt(2 * cfg.n_features)
    if cfg.drift_style == "remap":
        base = rng.normal(scale=scale, size=(cfg.n_classes, cfg.n_features))
        return _remap(base, cfg.n_concepts)
    if cfg.drift_style == "orthogonal":
        k = cfg.n_concepts * cfg.n_classes
        draw = rng.normal(size=(cfg.n_features, k))
        q = np.linalg.qr(draw)[0].T
        norm = scale * math.sqrt(cfg.n_features)
        return (q * norm).reshape(cfg.n_concepts, cfg.n_classes, cfg.n_features)
    return rng.normal(
        scale=scale, size=(cfg.n_concepts, cfg.n_classes, cfg.n_features)
    )


def concept_image_templates(cfg: SyntheticDriftConfig) -> np.ndarray:
    """Per-class image templates per concept, [n_concepts, m, C, H, W]."""
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, 23])
    c, s = cfg.image_channels, cfg.image_size
    scale = cfg.separation * cfg.noise_std / math.sqrt(2 * c * s * s)
    if cfg.drift_style == "remap":
        base = rng.normal(scale=scale, size=(cfg.n_classes, c, s, s))
        return _remap(base, cfg.n_concepts)
    return rng.normal(
        scale=scale, size=(cfg.n_concepts, cfg.n_classes, c, s, s)
    )


def _transition_plan(cfg: SyntheticDriftConfig) -> list[tuple[float, int, int]]:
    """Per-batch interpolation plan: (weight of next concept, prev, next).

    weight 0 means the batch is purely the previous concept; an abrupt
    entry is encoded as weight -1 on its scheduled batch (resolved by
    the sampler: mid-batch swap or boundary swap per config).
    """
    plan = [(0.0, 0, 0)] * cfg.n_batches
    current = 0
    for batch, kind in cfg.drift_schedule:
        if kind == "abrupt":
            plan[batch] = (-1.0, current, current + 1)
            for k in range(batch + 1, cfg.n_batches):
                plan[k] = (0.0, current + 1, current + 1)
        else:
            for j in range(cfg.gradual_span):
                k = batch + j
                if k >= cfg.n_batches:
                    break
                t = (j + 1) / cfg.gradual_span
                plan[k] = (t, current, current + 1)
            for k in range(batch + cfg.gradual_span, cfg.n_batches):
                plan[k] = (0.0, current + 1, current + 1)
        current += 1
    return plan


def _sample(rng, means, templates, labels, noise):
    x = means[labels] + rng.normal(scale=noise, size=(len(labels), means.shape[1]))
    if templates is None:
        return x, None
    imgs = templates[labels] + rng.normal(
        scale=noise, size=(len(labels),) + templates.shape[1:]
    )
    return x, imgs


def generate_stream(cfg: SyntheticDriftConfig) -> list[StreamBatch]:
    """Materialize the configured stream. Same config, same batches."""
    cfg.validate()
    means = concept_class_means(cfg)
    templates = concept_image_templates(cfg) if cfg.with_images else None
    plan = _transition_plan(cfg)
    rng = np.random.default_rng([cfg.seed, 0])
    n = cfg.batch_size
    batches = []
    for k in range(cfg.n_batches):
        weight, prev, nxt = plan[k]
        labels = rng.integers(0, cfg.n_classes, size=n)
        if weight < 0 and not cfg.abrupt_at_boundary:
            # concept swaps mid-batch: first half old, second half new
            half = n // 2
            x_a, img_a = _sample(
                rng, means[prev],
                None if templates is None else templates[prev],
                labels[:half], cfg.noise_std,
            )
            x_b, img_b = _sample(
                rng, means[nxt],
                None if templates is None else templates[nxt],
                labels[half:], cfg.noise_std,
            )
            sensors = np.vstack([x_a, x_b])
            images = None if templates is None else np.concatenate([img_a, img_b])
        else:
            if weight < 0:
                eff_means, eff_tmpl = means[nxt], (
                    None if templates is None else templates[nxt]
                )
            elif weight == 0:
                eff_means, eff_tmpl = means[prev], (
                    None if templates is None else templates[prev]
                )
            else:
                eff_means = (1.0 - weight) * means[prev] + weight * means[nxt]
                eff_tmpl = (
                    None
                    if templates is None
                    else (1.0 - weight) * templates[prev] + weight * templates[nxt]
                )
            sensors, images = _sample(rng, eff_means, eff_tmpl, labels, cfg.noise_std)
        batches.append(StreamBatch(k, sensors, labels, images))
    return batches


def sample_concept(
    cfg: SyntheticDriftConfig, concept: int = 0, n: int = 200, salt: int = 0
) -> StreamBatch:
    """Draw a held-out batch from one concept, outside the stream's draws.

    Useful for measuring retention of an earlier concept after drift.
    """
    cfg.validate()
    if not 0 <= concept < cfg.n_concepts:
        raise ConfigError(f"concept {concept} outside [0, {cfg.n_concepts})")
    means = concept_class_means(cfg)
    templates = concept_image_templates(cfg) if cfg.with_images else None
    rng = np.random.default_rng([cfg.seed, 101, salt])
    labels = rng.integers(0, cfg.n_classes, size=n)
    sensors, images = _sample(
        rng, means[concept],
        None if templates is None else templates[concept],
        labels, cfg.noise_std,
    )
    return StreamBatch(-1, sensors, labels, images)
