"""Experiment harness: split, synthesize, preprocess, train, evaluate, summarize.

One experiment is a grid of cells, each an (epsilon, fairness setting) pair,
run for a number of repeats. Repeat r uses seed ``base_seed + r``; the
train/test split depends on ``base_seed`` only, so every cell and repeat of an
experiment sees the same split. Each AIM output depends only on (seed,
epsilon), so it is computed once and shared by all fairness settings of that
repeat.
"""
from __future__ import annotations

import copy
import itertools
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import datasets
from .aim import AimParams, Workload, run_aim
from .fairness import (ADULT_RULES, COMPAS_RULES, TotConstraints, apply_tot, fit_tot,
                       reweigh, rule_distortion)
from .learn import fit_logistic, predict
from .metrics import MetricReport, cumulative_tvd, fairness_report, ks_two_sample, ml_metrics
from .privacy import EpsDelta
from .rng import stream
from .tabular import Dataset, train_test_split

DEFAULT_RULES = {"adult": (ADULT_RULES, "max"), "compas": (COMPAS_RULES, "sum")}
DEFAULT_SPECS = {
    "adult": [["sex"], ["race"], ["race", "sex"]],
    "compas": [["race"], ["sex"], ["race", "sex"]],
    "german": [["sex"]],
}


@dataclass(frozen=True)
class FairnessSetting:
    method: str = "none"              # none | rw | tot
    eta: float | None = None
    c: tuple | None = None
    form: str = "ratio"
    scope: str = "cell"

    @property
    def label(self) -> str:
        if self.method != "tot":
            return self.method
        c = "/".join(f"{v:g}" for v in self.c)
        extra = "" if (self.form, self.scope) == ("ratio", "cell") else f",{self.form},{self.scope}"
        return f"tot(eta={self.eta:g},c={c}{extra})"


@dataclass
class PipelineConfig:
    name: str
    dataset: str
    csv_path: str | None = None
    epsilons: list = field(default_factory=lambda: [None])
    delta: float = 1e-9
    fairness: list = field(default_factory=lambda: [{"method": "none"}])
    protected_specs: list | None = None
    repeats: int = 1
    base_seed: int = 0
    train_fraction: float = 0.75
    output_dir: str = "results"
    aim: dict = field(default_factory=dict)
    tvd_orders: list = field(default_factory=lambda: [1, 2, 3])
    ks: bool = True
    timing: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        for e in self.epsilons:
            if e is not None and not e > 0:
                raise ValueError("epsilon values must be positive (or null for no DP)")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.dataset not in datasets.INGESTERS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.protected_specs is None:
            self.protected_specs = DEFAULT_SPECS[self.dataset]
        for s in self.settings():
            if s.eta is not None and s.eta < 0:
                raise ValueError("eta must be nonnegative")
            if s.c is not None and any(not 0 <= v <= 1 for v in s.c):
                raise ValueError("distortion bounds must lie in [0, 1]")

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        privacy = raw.pop("privacy", None)
        if privacy is not None:
            if privacy == "none":
                raw["epsilons"] = [None]
            else:
                raw["epsilons"] = privacy.get("epsilons", [None])
                raw["delta"] = privacy.get("delta", 1e-9)
        fair = raw.get("fairness")
        if isinstance(fair, (dict, str)):
            raw["fairness"] = [fair if isinstance(fair, dict) else {"method": fair}]
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def settings(self) -> list[FairnessSetting]:
        out = []
        for block in self.fairness:
            method = block.get("method", "none")
            if method in ("none", "rw"):
                out.append(FairnessSetting(method))
                continue
            if method != "tot":
                raise ValueError(f"unknown fairness method {method!r}")
            etas = block.get("etas", [block.get("eta", 0.05)])
            if "c_grid" in block:
                c_list = list(itertools.product(*block["c_grid"]))
            else:
                c_list = [tuple(block.get("c", (0.1, 0.05, 0.0)))]
            for eta in etas:
                for c in c_list:
                    out.append(FairnessSetting("tot", float(eta), tuple(float(v) for v in c),
                                               block.get("form", "ratio"),
                                               block.get("scope", "cell")))
        return out

    def tot_block(self) -> dict:
        for block in self.fairness:
            if block.get("method") == "tot":
                return block
        return {}

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRecord:
    config: str
    epsilon: float | None
    fairness: str
    repeat: int
    seed: int
    status: str                     # ok | tot-infeasible | error
    metrics: dict = field(default_factory=dict)
    error: str = ""
    seconds: float = 0.0

    def row(self) -> dict:
        out = {"config": self.config, "epsilon": self.epsilon, "fairness": self.fairness,
               "repeat": self.repeat, "seed": self.seed, "status": self.status,
               "error": self.error, "seconds": self.seconds}
        out.update(self.metrics)
        return out


# -- single run ---------------------------------------------------------------------

def evaluate(processed: Dataset, train: Dataset, test: Dataset, specs, tvd_orders=(1, 2, 3),
             ks: bool = True) -> MetricReport:
    """Fit the classifier on ``processed`` and measure it on the original ``test``."""
    model = fit_logistic(processed)
    labels, scores = predict(model, test)
    general = {}
    for k in tvd_orders:
        if k <= len(train.schema):
            general[f"tvd{k}"] = cumulative_tvd(processed, train, k)
    if ks:
        general["ks_stat"], general["ks_p"] = ks_two_sample(processed, train)
    return MetricReport(fairness_report(processed, test, labels, specs), general,
                        ml_metrics(test, labels, scores))


def _distortion(cfg: PipelineConfig, schema, setting: FairnessSetting):
    block = cfg.tot_block()
    rules, combine = DEFAULT_RULES.get(cfg.dataset, ({}, "max"))
    rules = block.get("rules", rules)
    combine = block.get("combine", combine)
    thresholds = tuple(block.get("thresholds", (0.99, 1.99, 2.99)))
    return rule_distortion(schema, rules, combine, thresholds, setting.c, setting.scope)


def _run_task(cfg: PipelineConfig, eps, r: int, train: Dataset, test: Dataset,
              settings) -> list[RunRecord]:
    seed = cfg.base_seed + r
    records = []
    t0 = time.perf_counter()
    try:
        if eps is None:
            base = train
        else:
            params = AimParams(**cfg.aim)
            base = run_aim(train, Workload.all_k_way(train.schema, 2), EpsDelta(eps, cfg.delta),
                           train.n, params, seed)
        aim_seconds = time.perf_counter() - t0
    except Exception as exc:  # recorded, never aborts the sweep
        msg = f"{type(exc).__name__}: {exc}"
        return [RunRecord(cfg.name, eps, s.label, r, seed, "error", error=msg) for s in settings]
    for s in settings:
        t1 = time.perf_counter()
        try:
            if s.method == "none":
                processed = base
            elif s.method == "rw":
                processed = reweigh(base, [base.schema.names[i] for i in base.schema.protected])
            else:
                res = fit_tot(base, _distortion(cfg, base.schema, s), TotConstraints(s.eta, s.form))
                if not res.feasible:
                    records.append(RunRecord(cfg.name, eps, s.label, r, seed, "tot-infeasible",
                                             seconds=aim_seconds + time.perf_counter() - t1))
                    continue
                processed = apply_tot(base, res.map, stream(seed, "tot"))
            report = evaluate(processed, train, test, cfg.protected_specs, cfg.tvd_orders, cfg.ks)
            records.append(RunRecord(cfg.name, eps, s.label, r, seed, "ok", report.flat(),
                                     seconds=aim_seconds + time.perf_counter() - t1))
        except Exception as exc:
            records.append(RunRecord(cfg.name, eps, s.label, r, seed, "error",
                                     error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"))
    return records


def load_split(cfg: PipelineConfig) -> tuple[Dataset, Dataset]:
    data = datasets.ingest(cfg.dataset, cfg.csv_path)
    return train_test_split(data, cfg.train_fraction, stream(cfg.base_seed, "split"))


def run_pipeline(cfg: PipelineConfig, jobs: int = 1, split=None, write: bool = False):
    """Run every (epsilon, setting, repeat) and return (records, summary frame)."""
    train, test = split if split is not None else load_split(cfg)
    settings = cfg.settings()
    tasks = []
    for eps in cfg.epsilons:
        # without DP every repeat sees identical data, so one run per cell suffices
        # unless a randomized transform is involved
        n_rep = cfg.repeats
        if eps is None and all(s.method != "tot" for s in settings):
            n_rep = 1
        tasks += [(eps, r) for r in range(n_rep)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_task, cfg, eps, r, train, test, settings) for eps, r in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_run_task(cfg, eps, r, train, test, settings) for eps, r in tasks]
    records = [rec for batch in results for rec in batch]
    order_eps = {e: i for i, e in enumerate(cfg.epsilons)}
    order_set = {s.label: i for i, s in enumerate(settings)}
    records.sort(key=lambda x: (order_eps[x.epsilon], order_set[x.fairness], x.repeat))
    summary = summarize(records)
    if write:
        write_outputs(cfg, records, summary)
    return records, summary


# -- summaries -----------------------------------------------------------------------

META = ("config", "epsilon", "fairness", "repeat", "seed", "status", "error", "seconds")


def records_frame(records) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in records])


def summarize(records) -> pd.DataFrame:
    """Mean and SD per (epsilon, fairness) cell over feasible repeats, with counts."""
    frame = records_frame(records)
    if frame.empty:
        return frame
    metric_cols = [c for c in frame.columns if c not in META]
    rows = []
    frame["_eps"] = frame["epsilon"].astype(object).where(frame["epsilon"].notna(), "none")
    for (eps, fair), grp in frame.groupby(["_eps", "fairness"], sort=False):
        ok = grp[grp["status"] == "ok"]
        row = {"epsilon": eps, "fairness": fair, "n_ok": len(ok),
               "n_infeasible": int((grp["status"] == "tot-infeasible").sum()),
               "n_error": int((grp["status"] == "error").sum()),
               "seconds_mean": float(grp["seconds"].mean())}
        for col in metric_cols:
            vals = ok[col].astype(float).dropna() if col in ok else pd.Series(dtype=float)
            row[f"{col}_mean"] = float(vals.mean()) if len(vals) else math.nan
            if len(vals) > 1 and vals.nunique() > 1:
                row[f"{col}_sd"] = float(vals.std(ddof=1))
            else:
                row[f"{col}_sd"] = 0.0 if len(vals) else math.nan
        rows.append(row)
    return pd.DataFrame(rows, columns=list(rows[0].keys())).rename_axis(None)


def long_frame(records) -> pd.DataFrame:
    frame = records_frame(records)
    metric_cols = [c for c in frame.columns if c not in META]
    return frame.melt(id_vars=[c for c in META if c in frame.columns and c != "error"],
                      value_vars=metric_cols, var_name="metric", value_name="value")


def write_outputs(cfg: PipelineConfig, records, summary, out_dir=None) -> Path:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out / f"{cfg.name}_summary.csv", index=False)
    records_frame(records).to_csv(out / f"{cfg.name}_records.csv", index=False)
    long_frame(records).to_csv(out / f"{cfg.name}_long.csv", index=False)
    with open(out / f"{cfg.name}_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
    return out


def format_table(summary: pd.DataFrame, metrics, digits: int = 3) -> pd.DataFrame:
    """Metrics as rows and cells as columns, formatted as 'mean (sd)'."""
    cols = {}
    for _, row in summary.iterrows():
        label = f"eps={row['epsilon']} {row['fairness']}"
        cols[label] = [
            f"{row[m + '_mean']:.{digits}f} ({row[m + '_sd']:.{digits}f})"
            if m + "_mean" in row and not pd.isna(row[m + "_mean"]) else "-"
            for m in metrics]
    return pd.DataFrame(cols, index=list(metrics))


# -- sensitivity and timing ---------------------------------------------------------------

def run_sensitivity(cfg: PipelineConfig, jobs: int = 1, split=None, write: bool = False):
    """Sweep the distortion bounds; returns records and a plot-ready frame."""
    records, summary = run_pipeline(cfg, jobs, split, write=False)
    rows = []
    settings = {s.label: s for s in cfg.settings()}
    for _, row in summary.iterrows():
        s = settings[row["fairness"]]
        if s.method != "tot":
            continue
        out = {"epsilon": row["epsilon"], "eta": s.eta, "c1": s.c[0], "c2": s.c[1], "c3": s.c[2],
               "n_ok": row["n_ok"], "n_infeasible": row["n_infeasible"]}
        for m in ("f1", "accuracy", "tvd1", "tvd2", "tvd3"):
            out[f"{m}_mean"] = row.get(f"{m}_mean", math.nan)
            out[f"{m}_sd"] = row.get(f"{m}_sd", math.nan)
        for col in summary.columns:
            if col.startswith("spd(") or col.startswith("cod("):
                out[col] = row[col]
        rows.append(out)
    table = pd.DataFrame(rows)
    if write:
        out = write_outputs(cfg, records, summary)
        table.to_csv(out / f"{cfg.name}_sensitivity.csv", index=False)
    return records, table


def sensitivity_robustness(table: pd.DataFrame, eta: float, metric: str = "f1") -> tuple[float, float]:
    """(max - min of cell means, mean across-repeat SD) for one eta."""
    sub = table[np.isclose(table["eta"], eta)]
    means = sub[f"{metric}_mean"].dropna()
    sds = sub[f"{metric}_sd"].dropna()
    return float(means.max() - means.min()), float(sds.mean())


def run_timing(cfg: PipelineConfig, split=None, write: bool = False) -> pd.DataFrame:
    """Wall-clock seconds of AIM + TOT per (sample size, attribute subset)."""
    train, _ = split if split is not None else load_split(cfg)
    spec = cfg.timing
    sizes = spec.get("sizes", [train.n // 4, train.n // 2, train.n])
    feature_sets = spec.get("feature_sets", [list(train.schema.names)])
    eps = spec.get("epsilon", 1.0)
    eta = spec.get("eta", 0.1)
    setting = FairnessSetting("tot", eta, tuple(spec.get("c", (0.1, 0.05, 0.0))))
    rows = []
    for names, n in itertools.product(feature_sets, sizes):
        sub = train.project(names)
        times, statuses = [], []
        for r in range(cfg.repeats):
            seed = cfg.base_seed + r
            rng = stream(seed, "timing", n, len(names))
            idx = np.sort(rng.choice(sub.n, size=min(n, sub.n), replace=False))
            data = sub.take(idx)
            t0 = time.perf_counter()
            syn = run_aim(data, Workload.all_k_way(data.schema, 2), EpsDelta(eps, cfg.delta),
                          data.n, AimParams(**cfg.aim), seed)
            res = fit_tot(syn, _distortion_for(cfg, syn.schema, setting), TotConstraints(eta))
            if res.feasible:
                apply_tot(syn, res.map, stream(seed, "tot"))
            times.append(time.perf_counter() - t0)
            statuses.append(res.status)
        rows.append({"features": "+".join(names), "n_attributes": len(names), "n": int(data.n),
                     "seconds_mean": float(np.mean(times)),
                     "seconds_sd": float(np.std(times, ddof=1)) if len(times) > 1 else 0.0,
                     "repeats": len(times),
                     "n_infeasible": sum(s != "optimal" for s in statuses)})
    table = pd.DataFrame(rows)
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / f"{cfg.name}_timing.csv", index=False)
    return table


def _distortion_for(cfg: PipelineConfig, schema, setting: FairnessSetting):
    """Distortion restricted to the rules whose attributes exist in ``schema``."""
    block = cfg.tot_block()
    rules, combine = DEFAULT_RULES.get(cfg.dataset, ({}, "max"))
    rules = {k: v for k, v in block.get("rules", rules).items() if k in schema.names}
    return rule_distortion(schema, rules, block.get("combine", combine),
                           tuple(block.get("thresholds", (0.99, 1.99, 2.99))), setting.c,
                           setting.scope)


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    new = copy.deepcopy(cfg)
    for k, v in kw.items():
        if v is not None:
            setattr(new, k, v)
    new.__post_init__()
    return new
