"""Command-line entry point: ``npsens {analyze,simulate,calibrate,summarize}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import ColumnMapping, DatasetError, case_study_config_path, load_csv, write_csv
from .npsem import NpsemConfig, simulate
from .pipeline import (
    EXIT_INPUT,
    EXIT_NONCONVERGED,
    EXIT_OK,
    AnalysisConfig,
    AnalysisError,
    run_analysis,
    run_simulation_study,
)


def _err(msg: str) -> None:
    print(f"npsens: {msg}", file=sys.stderr)


def _load_sim(path) -> tuple[NpsemConfig, dict]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return NpsemConfig.from_dict(raw), raw
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise AnalysisError("config", f"invalid simulation config {path}: {exc}", EXIT_INPUT) from exc


def cmd_analyze(args) -> int:
    path = case_study_config_path() if args.case_study else args.config
    if path is None:
        _err("analyze needs --config or --case-study")
        return EXIT_INPUT
    config = AnalysisConfig.from_file(path)
    report = run_analysis(config)
    if args.out:
        report.write(args.out)
    else:
        sys.stdout.write(report.to_json())
    if not report.converged:
        _err("TMLE did not converge; report flagged")
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, _ = _load_sim(args.config)
    data = simulate(cfg, args.n, args.seed)
    write_csv(data, args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    sim, raw = _load_sim(args.sim)
    analysis = AnalysisConfig.from_file(args.analysis)
    n = args.n or int(raw.get("n", 2000))
    report = run_simulation_study(sim, analysis, args.reps, n=n, threads=args.threads, mc_reps=args.mc_reps)
    report["analysis_config_sha256"] = analysis.sha256
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_summarize(args) -> int:
    if args.config:
        mapping = AnalysisConfig.from_file(args.config).columns
    else:
        with open(args.data, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
        reserved = {"A", "C", "Y", "Z"}
        mapping = ColumnMapping(
            covariates=tuple(h for h in header if h and h not in reserved),
            secondary="Z" if "Z" in header else None,
        )
    try:
        data = load_csv(args.data, mapping)
    except FileNotFoundError as exc:
        raise AnalysisError("input", f"data file not found: {args.data}", EXIT_INPUT) from exc
    except DatasetError as exc:
        raise AnalysisError("input", str(exc), EXIT_INPUT) from exc
    sys.stdout.write(json.dumps(data.summary(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npsens", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker processes for simulation replicates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run a prespecified analysis")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", type=Path)
    g.add_argument("--case-study", action="store_true", help="use the bundled case-study config")
    p.add_argument("--out", type=Path, help="directory for report.json, curve.csv, ic.csv (default: stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="simulation study against the oracle")
    p.add_argument("--sim", type=Path, required=True)
    p.add_argument("--analysis", type=Path, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--mc-reps", type=int, default=200_000)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("summarize", help="outcome counts per arm")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--config", type=Path, help="take the column mapping from an analysis config")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AnalysisError as exc:
        _err(str(exc))
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
