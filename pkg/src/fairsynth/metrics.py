"""Fairness, distributional-utility and classification metrics.

Group gaps are always unprivileged minus privileged, so negative values
favor the privileged group. A composite protected spec (several attribute
names) compares records privileged on every component with records
unprivileged on every component; mixed records belong to neither side.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import kstwobign, rankdata

from .tabular import Dataset, MarginalSpec, compute_marginal


class UndefinedMetric(ValueError):
    """A metric's conditioning event has no mass."""


def _names(protected) -> tuple:
    if isinstance(protected, (str, int)):
        return (protected,)
    return tuple(protected)


def protected_label(protected) -> str:
    return "+".join(str(p) for p in _names(protected))


def group_masks(d: Dataset, protected) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks (unprivileged, privileged) for a possibly composite spec."""
    names = _names(protected)
    if not names:
        raise ValueError("protected spec must name at least one attribute")
    unpriv = np.ones(d.n, bool)
    priv = np.ones(d.n, bool)
    for name in names:
        pos = d.schema.position(name)
        flag = d.rows[:, pos] == d.schema.privileged_index(pos)
        priv &= flag
        unpriv &= ~flag
    return unpriv, priv


def outcome_flags(d: Dataset) -> np.ndarray:
    return (d.rows[:, d.schema.outcome] == d.schema.favorable_index()).astype(np.int64)


def _rate(values, weights, mask, what) -> float:
    w = weights[mask]
    total = w.sum()
    if total <= 0:
        raise UndefinedMetric(f"no mass in the conditioning event for {what}")
    return float(w @ values[mask] / total)


def _gap(values, weights, unpriv, priv, what) -> float:
    return _rate(values, weights, unpriv, what) - _rate(values, weights, priv, what)


def cod(d: Dataset, protected) -> float:
    """Favorable-outcome rate of the unprivileged minus the privileged group."""
    unpriv, priv = group_masks(d, protected)
    return _gap(outcome_flags(d), d.weight_vector(), unpriv, priv, "COD")


def spd(test: Dataset, predictions, protected) -> float:
    unpriv, priv = group_masks(test, protected)
    return _gap(np.asarray(predictions), test.weight_vector(), unpriv, priv, "SPD")


def cud(test: Dataset, predictions, protected,
        utility: Callable[[np.ndarray, np.ndarray, np.ndarray], float]) -> float:
    """u(group 0) - u(group 1) for a utility of (y, yhat, weights) on each group."""
    y = outcome_flags(test)
    yhat = np.asarray(predictions)
    w = test.weight_vector()
    unpriv, priv = group_masks(test, protected)
    return float(utility(y[unpriv], yhat[unpriv], w[unpriv])
                 - utility(y[priv], yhat[priv], w[priv]))


def _conditional(cond_y: int, pred_value: int, what: str):
    def u(y, yhat, w):
        mask = y == cond_y
        return _rate((yhat == pred_value).astype(float), w, mask, what)
    return u


def fn_balance(test: Dataset, predictions, protected) -> float:
    """Gap in false negative rate P(yhat=0 | y=1)."""
    return cud(test, predictions, protected, _conditional(1, 0, "FN balance"))


def fp_balance(test: Dataset, predictions, protected) -> float:
    """Gap in false positive rate P(yhat=1 | y=0)."""
    return cud(test, predictions, protected, _conditional(0, 1, "FP balance"))


def aod(test: Dataset, predictions, protected) -> float:
    """Mean of the false positive rate gap and the true positive rate gap."""
    fpr_gap = cud(test, predictions, protected, _conditional(0, 1, "AOD"))
    tpr_gap = cud(test, predictions, protected, _conditional(1, 1, "AOD"))
    return 0.5 * (fpr_gap + tpr_gap)


# -- general utility ----------------------------------------------------------------------

def cumulative_tvd(a: Dataset, b: Dataset, k: int) -> float:
    """Sum over all k-attribute marginals of half the L1 gap between normalized tables."""
    if a.schema.shape != b.schema.shape or a.schema.names != b.schema.names:
        raise ValueError("datasets must share a schema")
    d = len(a.schema)
    if not 1 <= k <= d:
        raise ValueError(f"k must be between 1 and {d}")
    total = 0.0
    for attrs in itertools.combinations(range(d), k):
        spec = MarginalSpec(attrs)
        pa = compute_marginal(a, spec).normalized()
        pb = compute_marginal(b, spec).normalized()
        total += 0.5 * np.abs(pa - pb).sum()
    return float(total)


def ks_two_sample(a: Dataset, b: Dataset) -> tuple[float, float]:
    """Two-sample KS test on the records' row-major cell indices.

    The statistic is the largest gap between the two empirical CDFs, read off
    between consecutive distinct indices; the p-value uses the asymptotic
    Kolmogorov distribution with effective size n_a n_b / (n_a + n_b).
    """
    if a.n == 0 or b.n == 0:
        raise ValueError("both datasets must be non-empty")
    if a.schema.shape != b.schema.shape:
        raise ValueError("datasets must share a schema")
    xa = np.sort(a.cell_index())
    xb = np.sort(b.cell_index())
    grid = np.union1d(xa, xb)
    fa = np.searchsorted(xa, grid, side="right") / xa.size
    fb = np.searchsorted(xb, grid, side="right") / xb.size
    stat = float(np.abs(fa - fb).max())
    en = a.n * b.n / (a.n + b.n)
    return stat, float(kstwobign.sf(np.sqrt(en) * stat))


# -- classification ---------------------------------------------------------------------

def auc(y, scores) -> float:
    """Area under the ROC curve from the rank-sum statistic with midranks for ties."""
    y = np.asarray(y).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ml_metrics(test: Dataset, predictions, scores=None) -> dict:
    """Accuracy, F1, the four confusion rates, and AUC (NaN when undefined)."""
    y = outcome_flags(test)
    yhat = np.asarray(predictions).astype(np.int64)
    w = test.weight_vector()
    if test.n == 0:
        raise ValueError("empty test set")
    tp = float(w[(y == 1) & (yhat == 1)].sum())
    tn = float(w[(y == 0) & (yhat == 0)].sum())
    fp = float(w[(y == 0) & (yhat == 1)].sum())
    fn = float(w[(y == 1) & (yhat == 0)].sum())

    def ratio(a, b):
        return a / b if b > 0 else float("nan")

    out = {
        "accuracy": ratio(tp + tn, tp + tn + fp + fn),
        "f1": ratio(2 * tp, 2 * tp + fp + fn),
        "tpr": ratio(tp, tp + fn),
        "tnr": ratio(tn, tn + fp),
        "fpr": ratio(fp, fp + tn),
        "fnr": ratio(fn, fn + tp),
    }
    try:
        out["auc"] = auc(y, yhat if scores is None else scores)
    except UndefinedMetric:
        out["auc"] = float("nan")
    return out


@dataclass
class MetricReport:
    fairness: dict = field(default_factory=dict)
    general: dict = field(default_factory=dict)
    ml: dict = field(default_factory=dict)

    def flat(self) -> dict:
        out = {}
        out.update(self.ml)
        out.update(self.general)
        out.update(self.fairness)
        return out


def fairness_report(data: Dataset, test: Dataset, predictions, specs: Sequence) -> dict:
    """COD on ``data`` plus classifier gaps on ``test`` for each protected spec."""
    out = {}
    for spec in specs:
        lab = protected_label(spec)
        for name, fn in (("spd", spd), ("aod", aod), ("fn_balance", fn_balance),
                         ("fp_balance", fp_balance)):
            try:
                out[f"{name}({lab})"] = fn(test, predictions, spec)
            except UndefinedMetric:
                out[f"{name}({lab})"] = float("nan")
        try:
            out[f"cod({lab})"] = cod(data, spec)
        except UndefinedMetric:
            out[f"cod({lab})"] = float("nan")
    return out
