"""Command-line entry points: run, generate, report, ablate, serve.

The CLI is a thin shell over the api module: every subcommand maps to
one library call, and with ``--server`` the same request is sent to a
running service instead, with identical results. Exit codes: 0 success,
1 runtime failure, 2 invalid configuration. The only environment knob
is DRIFTLEARN_LOG (a logging level name).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .api import (
    execute_run,
    format_ablation_report,
    format_report,
    generate_dataset,
    run_ablations,
)
from .config import ABLATION_TOGGLES, RunConfig, apply_overrides, load_config
from .errors import ConfigError, DriftlearnError


def _parse_toggles(values) -> tuple:
    toggles = []
    for value in values or ():
        toggles.extend(t.strip() for t in value.split(",") if t.strip())
    return tuple(toggles)


def _assemble_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {
        "mode": args.mode,
        "data": args.data,
        "seeds": args.seeds,
        "out": args.out,
    }
    return apply_overrides(cfg, overrides)


def _client(server: str):
    import httpx

    return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)


def _remote(server: str, path: str, payload: dict) -> dict:
    with _client(server) as client:
        response = client.post(path, json=payload, params={"wait": "true"})
    if response.status_code == 422:
        raise ConfigError(response.json().get("detail", response.text))
    if response.status_code >= 400:
        raise RuntimeError(f"server returned {response.status_code}: {response.text}")
    body = response.json()
    if body.get("status") == "failed":
        raise RuntimeError(body.get("error", "remote run failed"))
    return body


def cmd_run(args) -> int:
    cfg = _assemble_config(args)
    toggles = _parse_toggles(args.ablate)
    if args.server:
        body = _remote(args.server, "/runs",
                       {"config": cfg.to_mapping(), "toggles": list(toggles)})
        print(format_report(body["summary"]))
        return 0
    summary = execute_run(cfg, toggles)
    print(format_report(summary))
    print(f"artifacts in {cfg.out}")
    return 0


def cmd_generate(args) -> int:
    cfg = _assemble_config(args)
    target = args.out or cfg.out
    if not target.endswith(".csv"):
        raise ConfigError("field 'out': generate writes a .csv file path")
    if args.server:
        body = _remote(args.server, "/datasets/synthetic",
                       {"config": cfg.to_mapping(), "path": target})
        print(f"wrote {body['rows']} rows to {body['path']}")
        return 0
    rows = generate_dataset(cfg, target)
    print(f"wrote {rows} rows to {target}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out or "runs/latest")
    summary_path = out / "summary.json"
    ablation_path = out / "ablations.json"
    if ablation_path.exists():
        with open(ablation_path, encoding="utf-8") as fh:
            print(format_ablation_report(json.load(fh)["variants"]))
        return 0
    if not summary_path.exists():
        raise ConfigError(f"no summary.json or ablations.json under {out}")
    with open(summary_path, encoding="utf-8") as fh:
        print(format_report(json.load(fh)))
    return 0


def cmd_ablate(args) -> int:
    cfg = _assemble_config(args)
    toggles = _parse_toggles(args.ablate) or ABLATION_TOGGLES
    if args.server:
        body = _remote(args.server, "/ablations",
                       {"config": cfg.to_mapping(), "toggles": list(toggles)})
        print(format_ablation_report(body["report"]))
        return 0
    report = run_ablations(cfg, toggles)
    print(format_ablation_report(report))
    print(f"artifacts in {cfg.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat YAML config file")
    shared.add_argument("--mode", choices=("current-batch", "one-step-ahead"))
    shared.add_argument("--data", help="'synthetic' or a labeled CSV path")
    shared.add_argument("--seeds", help="comma-joined integer seeds")
    shared.add_argument("--out", help="output directory (or CSV path for generate)")
    shared.add_argument("--server", help="base URL of a running service")

    parser = argparse.ArgumentParser(
        prog="driftlearn",
        description="Streaming classifier that evolves its structure under drift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[shared], help="execute a seeded run")
    run.add_argument("--ablate", action="append",
                     help="ablation toggle(s), comma separated or repeated")
    run.set_defaults(fn=cmd_run)

    gen = sub.add_parser("generate", parents=[shared],
                         help="write a synthetic stream as CSV")
    gen.set_defaults(fn=cmd_generate)

    rep = sub.add_parser("report", parents=[shared],
                         help="print the summary for an output directory")
    rep.set_defaults(fn=cmd_report)

    abl = sub.add_parser("ablate", parents=[shared],
                         help="baseline vs toggled variants, shared seeds")
    abl.add_argument("--ablate", action="append",
                     help="toggles to compare (default: all)")
    abl.set_defaults(fn=cmd_ablate)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DRIFTLEARN_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DriftlearnError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
