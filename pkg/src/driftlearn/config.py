"""Flat, typed run configuration with YAML load/save and CLI overrides.

Every key is a scalar (or a comma-joined list rendered as a string in
override form), so a config file is a plain one-level mapping and any
key can be overridden from the command line by name. The emitted
effective-config file reproduces the run exactly under the same seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .extractor import FUSIONS
from .streams import NORMALIZATIONS, SyntheticDriftConfig

MODES = ("current-batch", "one-step-ahead")
ABLATION_TOGGLES = (
    "shrink-2dcnn",
    "no-1dcnn",
    "no-evolve",
    "no-replay",
    "no-softforget",
)


@dataclass
class RunConfig:
    """One prequential run: data source, model knobs, seeds, output."""

    mode: str = "current-batch"
    data: str = "synthetic"
    fusion: str = "sensor"
    sensor_path: str = "conv"
    image_stack: str = "full"
    normalization: str = "running"
    n_classes: int = 3
    batch_size: int = 50
    seeds: tuple = (0,)
    out: str = "runs/latest"

    alpha_drift: float = 0.0001
    alpha_warning: float = 0.0005
    memory_capacity: int = 500
    lr_floor: float = 0.001
    lr_cap: float = 0.02
    momentum: float = 0.95
    epochs: int = 1
    drift_warmup: int = 5
    soft_forgetting: bool = True
    evolve: bool = True
    replay: bool = True

    synthetic_features: int = 48
    synthetic_batches: int = 60
    synthetic_drifts: str = ""
    synthetic_style: str = "fresh"
    synthetic_noise: float = 0.3
    synthetic_separation: float = 8.0
    synthetic_images: bool = False
    seed_offset: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"field 'mode': must be one of {MODES}, got {self.mode!r}")
        if not self.data:
            raise ConfigError("field 'data': must be 'synthetic' or a CSV path")
        if self.data != "synthetic" and not self.data.endswith(".csv"):
            raise ConfigError(
                f"field 'data': must be 'synthetic' or a .csv path, got {self.data!r}"
            )
        if self.fusion not in FUSIONS:
            raise ConfigError(
                f"field 'fusion': must be one of {FUSIONS}, got {self.fusion!r}"
            )
        if self.sensor_path not in ("conv", "raw"):
            raise ConfigError(
                f"field 'sensor_path': must be 'conv' or 'raw', got {self.sensor_path!r}"
            )
        if self.image_stack not in ("full", "small"):
            raise ConfigError(
                f"field 'image_stack': must be 'full' or 'small', "
                f"got {self.image_stack!r}"
            )
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"field 'normalization': must be one of {NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        if self.n_classes < 2:
            raise ConfigError("field 'n_classes': must be >= 2")
        if self.batch_size < 1:
            raise ConfigError("field 'batch_size': must be >= 1")
        if not self.seeds:
            raise ConfigError("field 'seeds': must name at least one seed")
        if not (0.0 < self.alpha_drift < self.alpha_warning < 1.0):
            raise ConfigError(
                "field 'alpha_drift'/'alpha_warning': need "
                "0 < alpha_drift < alpha_warning < 1"
            )
        if self.memory_capacity < 1:
            raise ConfigError("field 'memory_capacity': must be >= 1")
        if not (0.0 < self.lr_floor <= self.lr_cap):
            raise ConfigError("field 'lr_floor'/'lr_cap': need 0 < floor <= cap")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("field 'momentum': must lie in [0, 1)")
        if self.epochs < 1:
            raise ConfigError("field 'epochs': must be >= 1")
        if self.drift_warmup < 0:
            raise ConfigError("field 'drift_warmup': must be >= 0")
        if self.data == "synthetic":
            self.synthetic_config(seed=0).validate()
        if self.fusion != "sensor" and not (
            self.data == "synthetic" and self.synthetic_images
        ):
            raise ConfigError(
                "field 'fusion': image paths need synthetic_images=true "
                "(CSV streams carry no images)"
            )

    # ------------------------------------------------------------ derived

    def synthetic_config(self, seed: int) -> SyntheticDriftConfig:
        return SyntheticDriftConfig(
            n_features=self.synthetic_features,
            n_classes=self.n_classes,
            n_batches=self.synthetic_batches,
            batch_size=self.batch_size,
            drift_schedule=parse_drifts(self.synthetic_drifts),
            noise_std=self.synthetic_noise,
            separation=self.synthetic_separation,
            drift_style=self.synthetic_style,
            with_images=self.synthetic_images,
            seed=seed + self.seed_offset,
        )

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def parse_drifts(text: str) -> tuple:
    """Parse a schedule string like ``"20:abrupt,40:gradual"``."""
    if not text:
        return ()
    schedule = []
    for part in text.split(","):
        piece = part.strip()
        if not piece:
            continue
        if ":" in piece:
            batch_text, kind = piece.split(":", 1)
        else:
            batch_text, kind = piece, "abrupt"
        try:
            batch = int(batch_text)
        except ValueError:
            raise ConfigError(
                f"field 'synthetic_drifts': bad batch number {batch_text!r}"
            ) from None
        schedule.append((batch, kind.strip()))
    return tuple(schedule)


def parse_seeds(value) -> tuple:
    """Seeds from a YAML list or a comma-joined override string."""
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    try:
        seeds = tuple(int(v) for v in items)
    except (TypeError, ValueError):
        raise ConfigError(f"field 'seeds': not an integer list: {value!r}") from None
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"field 'seeds': duplicates in {seeds}")
    return seeds


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if name == "seeds":
        return parse_seeds(value)
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"field {name!r}: cannot read {value!r} as {kind}"
        ) from None


def from_mapping(mapping: dict) -> RunConfig:
    if not isinstance(mapping, dict):
        raise ConfigError("config file must hold a flat key-value mapping")
    unknown = sorted(set(mapping) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    kwargs = {name: _coerce(name, value) for name, value in mapping.items()}
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file does not parse as YAML: {exc}") from None
    if payload is None:
        payload = {}
    return from_mapping(payload)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """New config with the named fields replaced (CLI flag overrides)."""
    mapping = cfg.to_mapping()
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config field {name!r}")
        mapping[name] = value
    return from_mapping(mapping)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_mapping(), fh, sort_keys=True)


def apply_toggles(cfg: RunConfig, toggles) -> RunConfig:
    """Fold ablation toggles into the config they modify."""
    unknown = sorted(set(toggles) - set(ABLATION_TOGGLES))
    if unknown:
        raise ConfigError(
            f"unknown ablation toggles: {', '.join(unknown)} "
            f"(known: {', '.join(ABLATION_TOGGLES)})"
        )
    overrides = {}
    if "no-evolve" in toggles:
        overrides["evolve"] = False
    if "no-replay" in toggles:
        overrides["replay"] = False
    if "no-softforget" in toggles:
        overrides["soft_forgetting"] = False
    if "no-1dcnn" in toggles:
        overrides["sensor_path"] = "raw"
    if "shrink-2dcnn" in toggles:
        overrides["image_stack"] = "small"
    return apply_overrides(cfg, overrides)
