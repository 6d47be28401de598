"""Command-line entry point: ``fairsynth {ingest,run,sensitivity,timing,report}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import pandas as pd

from . import datasets
from .pipeline import (PipelineConfig, format_table, run_pipeline, run_sensitivity, run_timing,
                       sensitivity_robustness, with_overrides)

REPORT_METRICS = ("accuracy", "f1", "auc", "tvd1", "tvd2", "tvd3", "ks_stat")


def _load(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    return with_overrides(cfg, repeats=args.repeats, output_dir=args.out)


def _report_errors(records) -> int:
    bad = [r for r in records if r.status == "error"]
    for r in bad:
        first = r.error.splitlines()[0] if r.error else "unknown error"
        print(f"error: eps={r.epsilon} {r.fairness} repeat={r.repeat} seed={r.seed}: {first}",
              file=sys.stderr)
    return 1 if bad else 0


def cmd_ingest(args) -> int:
    data = datasets.ingest(args.dataset, args.csv)
    print(f"{args.dataset}: {data.n} rows, {len(data.schema)} attributes")
    for a in data.schema.attributes:
        counts = pd.Series(data.column(a.name)).value_counts().sort_index()
        shown = ", ".join(f"{a.levels[i]}={c}" for i, c in counts.items()) if not a.numeric \
            else f"{a.size} distinct values"
        print(f"  {a.name} [{a.role}]: {shown}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        data.to_frame().to_csv(out / f"{args.dataset}.csv", index=False)
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    records, summary = run_pipeline(cfg, jobs=args.jobs, write=True)
    n_inf = sum(r.status == "tot-infeasible" for r in records)
    print(f"{cfg.name}: {len(records)} runs, {n_inf} infeasible; results in {cfg.output_dir}")
    print(_table(summary, cfg).to_string())
    return _report_errors(records)


def cmd_sensitivity(args) -> int:
    cfg = _load(args)
    records, table = run_sensitivity(cfg, jobs=args.jobs, write=True)
    print(table.to_string(index=False))
    for eta in sorted(set(table["eta"])) if len(table) else []:
        spread, sd = sensitivity_robustness(table, eta)
        print(f"eta={eta:g}: F1 spread {spread:.4f} vs mean SD {sd:.4f}")
    return _report_errors(records)


def cmd_timing(args) -> int:
    cfg = _load(args)
    table = run_timing(cfg, write=True)
    print(table.to_string(index=False))
    return 0


def _table(summary: pd.DataFrame, cfg: PipelineConfig) -> pd.DataFrame:
    labels = [p if isinstance(p, str) else "+".join(p) for p in cfg.protected_specs]
    fair = [f"{m}({lab})" for lab in labels for m in ("cod", "spd", "aod")]
    return format_table(summary, list(REPORT_METRICS) + fair)


def cmd_report(args) -> int:
    cfg = _load(args)
    path = Path(cfg.output_dir) / f"{cfg.name}_summary.csv"
    if not path.exists():
        print(f"no summary at {path}; run `fairsynth run --config {args.config}` first",
              file=sys.stderr)
        return 1
    summary = pd.read_csv(path)
    table = _table(summary, cfg)
    print(table.to_string())
    table.to_csv(Path(cfg.output_dir) / f"{cfg.name}_table.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and summarize a raw dataset")
    p.add_argument("dataset", choices=sorted(datasets.INGESTERS))
    p.add_argument("--csv", help="raw file or directory (default: data/raw)")
    p.add_argument("--out", help="directory for the encoded CSV")
    p.set_defaults(fn=cmd_ingest)

    for name, fn, hint in (("run", cmd_run, "run an experiment grid"),
                           ("sensitivity", cmd_sensitivity, "sweep distortion bounds"),
                           ("timing", cmd_timing, "time AIM + TOT by size and attributes"),
                           ("report", cmd_report, "print the table of a finished run")):
        p = sub.add_parser(name, help=hint)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--repeats", type=int, help="repeat count (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError) as exc:
        print(f"fairsynth: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
