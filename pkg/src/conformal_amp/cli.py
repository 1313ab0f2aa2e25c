"""Benchmark command line: one subcommand per experiment.

Usage examples::

    conformal-amp length --n 100 --d 50 --regularizer ridge --lam 1.0 \
        --trials 200 --seed 1 --output out/
    conformal-amp timing --regularizer lasso --lam 1.0 --n 125 --d 250 \
        --dims 250,1000 --output out/
    conformal-amp real-data --csv boston.csv --target MEDV \
        --regularizer lasso --lam 1.0

Settings may also come from a JSON file via --config; explicit flags
override it.  Exit codes: 0 success, 1 experiment failure, 2 usage
error.  The worker pool is capped by CONFORMAL_AMP_THREADS.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import ExperimentConfig, Report, emit_report, run_experiment
from .data import RealDataConfig, SyntheticConfig
from .glm import GlmSpec

SUBCOMMANDS = {
    "length": "length",
    "jaccard": "jaccard",
    "bayes-compare": "bayes_compare",
    "timing": "timing",
    "real-data": "real_data",
    "coverage": "coverage",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformal-amp",
        description="Conformal prediction benchmarks for ridge/lasso regression "
                    "with message-passing acceleration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--output", type=Path, default=Path("."),
                       help="directory for report.json / report.csv")
        p.add_argument("--format", choices=["json", "csv", "both"], default="both",
                       help="which report files to write")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--test-samples", type=int, dest="test_samples")
        p.add_argument("--kappa", type=float)
        p.add_argument("--regularizer", choices=["ridge", "lasso"])
        p.add_argument("--lam", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--teacher-prior", choices=["gaussian", "laplace"],
                       dest="teacher_prior")
        p.add_argument("--noise-variance", type=float, dest="noise_variance")
        p.add_argument("--grid-points", type=int, dest="grid_points")
        p.add_argument("--train-fraction", type=float, dest="train_fraction")
        p.add_argument("--damping", type=float)
        if name == "timing":
            p.add_argument("--dims", type=str, help="comma-separated dimensions")
            p.add_argument("--reps", type=int, dest="timing_reps")
        if name == "real-data":
            p.add_argument("--csv", type=Path, help="CSV data file")
            p.add_argument("--target", type=str, help="target column name")
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    experiment = SUBCOMMANDS[args.command]
    raw: dict = {}
    if args.config is not None:
        with Path(args.config).open("r", encoding="utf-8") as fh:
            raw = json.load(fh)
    raw["experiment"] = experiment

    glm = dict(raw.get("glm", {"regularizer": "ridge", "lam": 1.0}))
    if args.regularizer is not None:
        glm["regularizer"] = args.regularizer
    if args.lam is not None:
        glm["lam"] = args.lam
    raw["glm"] = glm

    if experiment == "real_data":
        data = dict(raw.get("data", {}))
        if getattr(args, "csv", None) is not None:
            data["csv_path"] = str(args.csv)
        if getattr(args, "target", None) is not None:
            data["target_column"] = args.target
        if "csv_path" not in data or "target_column" not in data:
            raise ValueError("real-data needs --csv and --target (or a config file)")
        raw["data"] = data
    else:
        data = dict(raw.get("data", {"n": 100, "d": 50, "teacher_prior": "gaussian",
                                     "noise_variance": 1.0}))
        for key in ("n", "d", "teacher_prior", "noise_variance"):
            value = getattr(args, key, None)
            if value is not None:
                data[key] = value
        raw["data"] = data

    for key in ("seed", "trials", "test_samples", "kappa", "grid_points",
                "train_fraction", "damping", "timing_reps"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "dims", None) is not None:
        raw["dims"] = [int(token) for token in str(args.dims).split(",") if token]
    raw["output"] = str(args.output)
    return ExperimentConfig.from_dict(raw)


def _print_summary(report: Report) -> None:
    print(f"experiment: {report.experiment}  (seed {report.seed})")
    for name, m in report.methods.items():
        parts = [f"  {name}:"]
        if m.coverage is not None:
            parts.append(f"coverage={m.coverage:.3f}")
        if m.mean_length is not None:
            parts.append(f"mean_length={m.mean_length:.3f}")
        if m.mean_jaccard is not None:
            parts.append(f"mean_jaccard={m.mean_jaccard:.3f}")
        if m.wall_time_seconds is not None:
            parts.append(f"wall_time={m.wall_time_seconds:.4f}s")
        if m.failures:
            parts.append(f"failures={m.failures}/{m.trials}")
        print(" ".join(parts))


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        parser.exit(2, f"config error: {exc}\n")
    try:
        report = run_experiment(cfg)
        outputs = ["json", "csv"] if args.format == "both" else [args.format]
        for fmt in outputs:
            path = emit_report(report, fmt, args.output)
            print(f"wrote {path}")
        _print_summary(report)
    except Exception as exc:  # experiment failure -> exit code 1
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
