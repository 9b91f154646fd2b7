"""Command line: ``pairsource {simulate,analyze,car,print-defaults}``.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data error, 4 low-gain regime violated, 5 fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .coincidence import DEFAULT_WINDOW, compute_car
from .errors import ConfigError, PairSourceError, UndefinedCarError
from .fileio import DEFAULTS_TEXT, load_config, read_dataset, read_histogram, write_report
from .sweep import analyze_datasets, run_pipeline

log = logging.getLogger("pairsource")


def _summary_line(report) -> str:
    g = report.gamma
    return f"gamma_eff = {g.value:.6g} +/- {g.sigma:.3g} MHz/mW^2 ({g.method.value})"


def cmd_simulate(config_path, seed=None, workers=None, output=None) -> int:
    cfg = load_config(config_path)
    if cfg.mode != "simulate":
        log.warning("config mode is %r; running simulate anyway", cfg.mode)
        if cfg.params is None:
            raise ConfigError("simulate needs a [source] section (config was written for analyze)")
    if seed is not None:
        cfg.seed = seed
    if workers is not None:
        cfg.workers = workers
    outdir = Path(output) if output else cfg.output_dir
    report = run_pipeline(
        cfg.params,
        cfg.plan,
        cfg.seed,
        options=cfg.options,
        workers=cfg.workers,
        bin_width=cfg.bin_width,
    )
    write_report(report, outdir)
    print(_summary_line(report))
    print(f"report written to {outdir}")
    return 0


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_analyze(config_path, output=None) -> int:
    cfg = load_config(config_path)
    if not cfg.inputs:
        raise ConfigError("missing required field [inputs] dataset_a (and/or dataset_b)")
    datasets = {c: read_dataset(p) for c, p in cfg.inputs.items()}
    report = analyze_datasets(
        datasets,
        cfg.eta_coupling,
        cfg.options,
        provenance={
            "mode": "analyze",
            "inputs": {c.value: {"file": p.name, "sha256": _sha256(p)} for c, p in sorted(cfg.inputs.items())},
        },
    )
    for w in report.warnings:
        print(f"WARNING: {w}", file=sys.stderr)
    outdir = Path(output) if output else cfg.output_dir
    write_report(report, outdir)
    print(_summary_line(report))
    print(f"report written to {outdir}")
    return 0


def cmd_car(histogram_path, window_ns=DEFAULT_WINDOW * 1e9, rep_period_ns=20.0, center_ns=0.0) -> int:
    h, _ = read_histogram(histogram_path)
    try:
        est = compute_car(h, rep_period_ns * 1e-9, window_ns * 1e-9, center_ns * 1e-9)
    except UndefinedCarError as exc:
        record = {
            "status": "undefined",
            "reason": "no accidental counts in the adjacent peaks",
            "central_counts": exc.n_central,
            "accidental_counts": exc.n_accidental,
            "car_lower_bound": exc.car_lower_bound,
            "window_ns": window_ns,
        }
        print(json.dumps(record, indent=2, sort_keys=True))
        return exc.exit_code
    print(json.dumps({"status": "ok", **est.to_record()}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairsource", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate both coupler configurations and extract gamma_eff")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--workers", type=int, help="override [run] workers")
    p.add_argument("--output", help="override [run] output_dir")

    p = sub.add_parser("analyze", help="analyse recorded sweep datasets")
    p.add_argument("config")
    p.add_argument("--output", help="override [run] output_dir")

    p = sub.add_parser("car", help="CAR of a single coincidence histogram")
    p.add_argument("histogram")
    p.add_argument("--window", type=float, default=DEFAULT_WINDOW * 1e9, help="window in ns (default 2)")
    p.add_argument("--rep-period", type=float, default=20.0, help="pulse period in ns (default 20)")
    p.add_argument("--center", type=float, default=0.0, help="central peak delay in ns")

    sub.add_parser("print-defaults", help="print a configuration file with every default")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.seed, args.workers, args.output)
        if args.command == "analyze":
            return cmd_analyze(args.config, args.output)
        if args.command == "car":
            return cmd_car(args.histogram, args.window, args.rep_period, args.center)
        sys.stdout.write(DEFAULTS_TEXT)
        return 0
    except PairSourceError as exc:
        kind = type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
