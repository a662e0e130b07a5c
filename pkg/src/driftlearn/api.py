"""Library entry points behind the CLI and the HTTP service.

Everything here is plain functions over RunConfig so that command-line,
in-process, and HTTP callers get identical behavior (and identical
artifacts) for the same configuration.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, apply_toggles, save_config
from .drift import DriftConfig
from .errors import ConfigError
from .extractor import ExtractorConfig, FeatureExtractor
from .harness import (
    OnlineLearner,
    run_one_step_ahead,
    run_prequential,
    summarize_runs,
    write_metrics_csv,
    write_summary_json,
)
from .network import EvolvingNetwork
from .streams import generate_stream, ingest_csv, write_stream_csv

log = logging.getLogger("driftlearn")

CONV1D_PLAN = (60, 40, 20)
CONV2D_FULL = (3, 8, 16)
CONV2D_SMALL = (3, 8)


def build_stream(cfg: RunConfig, seed: int):
    """Materialize the batch list for one seed."""
    if cfg.data == "synthetic":
        return generate_stream(cfg.synthetic_config(seed))
    if not Path(cfg.data).is_file():
        raise ConfigError(f"field 'data': no such file: {cfg.data}")
    return ingest_csv(
        cfg.data,
        batch_size=cfg.batch_size,
        normalization=cfg.normalization,
        n_classes=cfg.n_classes,
    )


def build_extractor_config(cfg: RunConfig, u: int) -> ExtractorConfig:
    if cfg.sensor_path == "raw":
        return ExtractorConfig(passthrough=True)
    conv1d = [(u, CONV1D_PLAN[0])]
    conv1d += list(zip(CONV1D_PLAN, CONV1D_PLAN[1:]))
    conv2d = CONV2D_FULL if cfg.image_stack == "full" else CONV2D_SMALL
    return ExtractorConfig(
        fusion=cfg.fusion, conv1d_channels=conv1d, conv2d_channels=conv2d
    )


def build_learner(cfg: RunConfig, u: int, seed: int) -> OnlineLearner:
    rng = np.random.default_rng([seed, 7])
    extractor = FeatureExtractor(build_extractor_config(cfg, u), u, rng=rng)
    network = EvolvingNetwork(extractor, cfg.n_classes, rng=rng)
    return OnlineLearner(
        network,
        drift=DriftConfig(alpha_drift=cfg.alpha_drift, alpha_warning=cfg.alpha_warning),
        memory_capacity=cfg.memory_capacity,
        lr_floor=cfg.lr_floor,
        lr_cap=cfg.lr_cap,
        momentum=cfg.momentum,
        epochs=cfg.epochs,
        soft_forgetting=cfg.soft_forgetting,
        evolve=cfg.evolve,
        replay=cfg.replay,
        drift_warmup=cfg.drift_warmup,
    )


def run_one_seed(cfg: RunConfig, seed: int):
    """One seeded run; returns (records, learner)."""
    stream = build_stream(cfg, seed)
    width = stream[0].sensors.shape[1]
    learner = build_learner(cfg, width, seed)
    runner = run_prequential if cfg.mode == "current-batch" else run_one_step_ahead
    records = runner(learner, stream)
    return records, learner


def execute_run(cfg: RunConfig, toggles=(), write: bool = True) -> dict:
    """Run every seed, write artifacts under cfg.out, return the summary."""
    cfg = apply_toggles(cfg, toggles)
    cfg.validate()
    out = Path(cfg.out)
    runs = []
    for seed in cfg.seeds:
        log.info("run seed=%s mode=%s data=%s", seed, cfg.mode, cfg.data)
        records, learner = run_one_seed(cfg, seed)
        runs.append(records)
        if write:
            out.mkdir(parents=True, exist_ok=True)
            write_metrics_csv(records, out / f"metrics_seed{seed}.csv")
            learner.net.save_checkpoint(out / f"checkpoint_seed{seed}.json")
    summary = summarize_runs(runs)
    summary["mode"] = cfg.mode
    summary["seeds"] = list(cfg.seeds)
    if write:
        write_summary_json(summary, out / "summary.json")
        save_config(cfg, out / "effective_config.yaml")
    return summary


def generate_dataset(cfg: RunConfig, path) -> int:
    """Write the seed-0 synthetic stream as a labeled CSV; returns row count."""
    if cfg.data != "synthetic":
        raise ConfigError("field 'data': generate needs a synthetic config")
    cfg.validate()
    if cfg.synthetic_images:
        raise ConfigError(
            "field 'synthetic_images': CSV output carries sensors only"
        )
    stream = generate_stream(cfg.synthetic_config(cfg.seeds[0]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return write_stream_csv(stream, path)


def run_ablations(cfg: RunConfig, toggles=()) -> dict:
    """Baseline plus each requested toggle, shared seeds, side by side."""
    cfg.validate()
    variants = {"baseline": ()}
    for toggle in toggles:
        variants[toggle] = (toggle,)
    table = {}
    base_out = Path(cfg.out)
    for name, variant_toggles in variants.items():
        variant_cfg = apply_toggles(cfg, variant_toggles)
        variant_cfg = apply_overrides(variant_cfg, {"out": str(base_out / name)})
        table[name] = execute_run(variant_cfg)
    report = {
        name: {
            "accuracy": entry["accuracy"]["mean"],
            "accuracy_std": entry["accuracy"]["std"],
            "depth": entry["depth"]["mean"],
            "drifts": entry["drifts"]["mean"],
        }
        for name, entry in table.items()
    }
    write_summary_json(
        {"variants": report, "seeds": list(cfg.seeds)},
        base_out / "ablations.json",
    )
    return report


def format_report(summary: dict) -> str:
    """Human-readable block for a summary.json payload."""
    lines = [
        f"runs: {summary['runs']}  mode: {summary.get('mode', '?')}",
        f"seeds: {summary.get('seeds', '?')}",
    ]
    for key in ("accuracy", "depth", "width", "drifts"):
        block = summary[key]
        lines.append(f"{key:>9}: {block['mean']:.4f} +/- {block['std']:.4f}")
    return "\n".join(lines)


def format_ablation_report(report: dict) -> str:
    lines = [f"{'variant':>14}  {'accuracy':>9}  {'depth':>6}  {'drifts':>6}"]
    for name, row in report.items():
        lines.append(
            f"{name:>14}  {row['accuracy']:9.4f}  {row['depth']:6.2f}  "
            f"{row['drifts']:6.2f}"
        )
    return "\n".join(lines)
