"""Command-line front end.

    fedvrdp run   --config cfg.yaml --out DIR [--seed N] [--override key=value ...]
    fedvrdp sweep --config cfg.yaml --axis byz_fraction=0.1,0.15,0.2 --out DIR [--parallel]

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
The log level is read from ``FEDVRDP_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .config import ExperimentConfig, apply_overrides, from_dict, load_config, parse_override, write_echo
from .errors import ConfigurationError, FedVRDPError, IngestionError
from .io import MetricsWriter, format_float, save_model
from .orchestrator import Federation

log = logging.getLogger("fedvrdp")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
AXIS_KEYS = {"byz_fraction": "byz_fraction", "sigma": "dp.sigma", "rule": "aggregator.rule"}
SUMMARY_HEADER = ("axis", "value", "status", "rounds", "test_acc", "test_loss", "eps_theorem1", "error")


def run(config: ExperimentConfig, out_dir) -> int:
    """Execute one experiment, writing ``metrics.csv``, ``config.json`` and ``model.bin``."""
    out = Path(out_dir)
    try:
        fed = Federation(config)
    except (ConfigurationError, IngestionError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except FedVRDPError as exc:
        log.error("setup failed: %s", exc)
        return EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    write_echo(config, out / "config.json")
    try:
        with MetricsWriter(out / "metrics.csv", config.record_wall_time) as writer:
            x, _ = fed.run(on_round=lambda result: writer.write(result.metrics))
    except FedVRDPError as exc:
        log.error("run failed: %s (partial metrics kept in %s)", exc, out / "metrics.csv")
        return EXIT_RUNTIME
    save_model(out / "model.bin", x)
    return EXIT_OK


def _axis_values(spec: str):
    if "=" not in spec:
        raise ConfigurationError(f"axis {spec!r} is not of the form name=v1,v2,...", "--axis")
    name, raw = spec.split("=", 1)
    name = name.strip()
    key = AXIS_KEYS.get(name, name)
    values = [yaml.safe_load(v) for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("axis needs at least one value", "--axis")
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        values = sorted(values)
    return name, key, values


def _sweep_one(args):
    base, key, value, out_dir = args
    try:
        config = from_dict(apply_overrides(base, {key: value}))
    except ConfigurationError as exc:
        return EXIT_CONFIG, str(exc)
    code = run(config, out_dir)
    return code, "" if code == EXIT_OK else f"exit code {code}"


def _final_row(out_dir):
    path = Path(out_dir) / "metrics.csv"
    if not path.exists():
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return rows[-1] if rows else None


def sweep(config: ExperimentConfig, axis: str, out_dir, parallel: bool = False) -> int:
    """Run one experiment per axis value and write ``summary.csv`` of final-round metrics."""
    name, key, values = _axis_values(axis)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = config.to_dict()
    jobs = [(base, key, v, out / f"{name}={v}") for v in values]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]

    failed = False
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for (_, _, value, run_dir), (code, error) in zip(jobs, results):
            failed |= code != EXIT_OK
            last = _final_row(run_dir) if code == EXIT_OK else None
            writer.writerow([
                name,
                value if isinstance(value, str) else format_float(value),
                "ok" if code == EXIT_OK else "failed",
                last["round"] if last else "0",
                last["test_acc"] if last else "",
                last["test_loss"] if last else "",
                last["eps_theorem1"] if last else "",
                error,
            ])
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedvrdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML or JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted config key, e.g. dp.sigma=0.5 (repeatable)")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run)
    p_sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         help="NAME=v1,v2,... with NAME in byz_fraction, sigma, rule or a dotted key")
    p_sweep.add_argument("--parallel", action="store_true", help="run sweep points in separate processes")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FEDVRDP_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = dict(parse_override(o) for o in args.override)
        config = load_config(args.config, overrides, args.seed)
    except ConfigurationError as exc:
        print(f"fedvrdp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return run(config, args.out)
    try:
        return sweep(config, args.axis, args.out, args.parallel)
    except ConfigurationError as exc:
        print(f"fedvrdp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
