"""Fairness preprocessing: the optimized transport map (TOT) and reweighting (RW).

TOT learns a randomized map q(v | g, u) where g is the composite protected
group and u, v range over the joint domain of the remaining attributes
(features and outcome). It is the solution of a linear program that keeps the
transformed distribution close in total variation, bounds the group ratio of
favorable and unfavorable outcome rates, and bounds the probability of large
per-record distortions. RW assigns per-(group, outcome) weights that make the
group and the outcome independent under the weighted empirical distribution.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .optim import INFEASIBLE, OPTIMAL, LinearProgram, check_feasibility, solve_lp
from .rng import as_generator
from .tabular import Dataset, Schema


# -- distortion ---------------------------------------------------------------------

def _split_positions(schema: Schema):
    prot = schema.protected
    rest = [i for i in range(len(schema)) if i not in prot]
    return prot, rest


@dataclass(frozen=True)
class DistortionSpec:
    """Distortion table over (u, v) plus the threshold/bound pairs.

    ``phi`` is a K x K array indexed by the row-major cell of the
    non-protected attributes before (u) and after (v) the transform.
    """

    phi: np.ndarray
    thresholds: tuple[float, ...] = (0.99, 1.99, 2.99)
    c_bounds: tuple[float, ...] = (0.1, 0.05, 0.0)
    # "cell" bounds each (g, u) conditional; "pooled" bounds the
    # group-averaged conditional given u only
    scope: str = "cell"

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise ValueError("phi must be a square table")
        if (phi < 0).any():
            raise ValueError("distortion values must be nonnegative")
        th = tuple(float(t) for t in self.thresholds)
        cb = tuple(float(c) for c in self.c_bounds)
        if len(th) != len(cb):
            raise ValueError("one bound per threshold")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if any(not 0 <= c <= 1 for c in cb):
            raise ValueError("distortion bounds must lie in [0, 1]")
        if self.scope not in ("cell", "pooled"):
            raise ValueError("scope must be 'cell' or 'pooled'")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "c_bounds", cb)

    def with_bounds(self, c_bounds) -> "DistortionSpec":
        return DistortionSpec(self.phi, self.thresholds, tuple(c_bounds), self.scope)

    def forbidden(self) -> np.ndarray:
        """Mask of (u, v) pairs whose probability is forced to zero."""
        mask = np.zeros(self.phi.shape, dtype=bool)
        for t, c in zip(self.thresholds, self.c_bounds):
            if c == 0:
                mask |= self.phi > t
        return mask


def _attribute_cost(rule: Mapping, attr) -> np.ndarray:
    """Cost matrix for one attribute from a rule description.

    ``{"steps": [c0, c1, c2, ...]}`` charges c_k for moving k levels (the last
    entry covers any larger move); ``{"transitions": {"a|b": cost}}`` charges
    listed level changes; ``{"changed": cost}`` charges any change.
    """
    k = attr.size
    cost = np.zeros((k, k))
    if "steps" in rule:
        steps = list(rule["steps"])
        gap = np.abs(np.subtract.outer(np.arange(k), np.arange(k)))
        cost = np.asarray(steps, dtype=float)[np.minimum(gap, len(steps) - 1)]
    if "changed" in rule:
        cost = np.maximum(cost, float(rule["changed"]) * (1 - np.eye(k)))
    for pair, val in dict(rule.get("transitions", {})).items():
        src, dst = pair.split("|")
        cost[attr.index(src), attr.index(dst)] = float(val)
    return cost


def rule_distortion(schema: Schema, rules: Mapping[str, Mapping], combine: str = "max",
                    thresholds=(0.99, 1.99, 2.99), c_bounds=(0.1, 0.05, 0.0),
                    scope: str = "cell") -> DistortionSpec:
    """Build a distortion table from per-attribute rules, combined by max or sum."""
    _, rest = _split_positions(schema)
    shape = tuple(schema.attributes[i].size for i in rest)
    phi = np.zeros(shape + shape)
    nd = len(rest)
    for name, rule in rules.items():
        pos = schema.position(name)
        if pos not in rest:
            raise ValueError(f"distortion rule for protected attribute {name!r}")
        j = rest.index(pos)
        cost = _attribute_cost(rule, schema.attributes[pos])
        view = [1] * (2 * nd)
        view[j] = view[nd + j] = cost.shape[0]
        term = cost.reshape(view)
        if combine == "max":
            phi = np.maximum(phi, term)
        elif combine == "sum":
            phi = phi + term
        else:
            raise ValueError("combine must be 'max' or 'sum'")
    K = int(np.prod(shape))
    return DistortionSpec(phi.reshape(K, K), thresholds, c_bounds, scope)


ADULT_RULES = {
    "education": {"steps": [0, 0, 3]},
    "age": {"steps": [0, 2, 3]},
    "income": {"transitions": {">50K|<=50K": 1}},
}

COMPAS_RULES = {
    "age": {"steps": [0, 1, 2]},
    "priors": {"steps": [0, 1, 2]},
    "charge": {"transitions": {"F|M": 1, "M|F": 2}},
    "recidivism": {"changed": 2},
}


def adult_distortion(schema: Schema, **kw) -> DistortionSpec:
    return rule_distortion(schema, ADULT_RULES, "max", **kw)


def compas_distortion(schema: Schema, **kw) -> DistortionSpec:
    return rule_distortion(schema, COMPAS_RULES, "sum", **kw)


# -- TOT -------------------------------------------------------------------------------

@dataclass(frozen=True)
class TotConstraints:
    """Discrimination bound eta, either one value or per (y, g1, g2).

    ``form="ratio"`` bounds q(y|g1)/q(y|g2) within [1 - eta, 1 + eta];
    ``form="difference"`` bounds |q(y|g1) - q(y|g2)| by eta instead.
    """

    eta: float | Mapping = 0.05
    form: str = "ratio"

    def __post_init__(self):
        vals = self.eta.values() if isinstance(self.eta, Mapping) else [self.eta]
        if any(not v >= 0 for v in vals):
            raise ValueError("eta must be nonnegative")
        if self.form not in ("ratio", "difference"):
            raise ValueError("form must be 'ratio' or 'difference'")

    def get(self, y: int, g1: int, g2: int) -> float:
        if isinstance(self.eta, Mapping):
            return float(self.eta.get((y, g1, g2), np.inf))
        return float(self.eta)


@dataclass
class TotIndex:
    """Bookkeeping linking LP variables to (cell, v) pairs."""

    schema: Schema
    prot: list
    rest: list
    n_groups: int
    K: int
    cells: np.ndarray          # (n_cells, 2) of (g, u)
    cell_mass: np.ndarray      # empirical p(g, u)
    var_cell: np.ndarray       # cell index of each q variable
    var_v: np.ndarray          # target v of each q variable
    n_q: int
    t_cells: np.ndarray        # v of each auxiliary t variable
    outcome_col: int           # position of the outcome among ``rest``


@dataclass
class TotMap:
    """Conditional distributions q(v | g, u), dense, identity for unseen cells."""

    schema: Schema
    cond: np.ndarray           # (n_groups, K, K)
    seen: np.ndarray           # (n_groups, K) bool

    def __post_init__(self):
        sums = self.cond.sum(axis=2)
        if (self.cond < 0).any() or np.abs(sums - 1).max() > 1e-8:
            raise ValueError("each conditional must be a probability vector")

    @classmethod
    def identity(cls, schema: Schema) -> "TotMap":
        prot, rest = _split_positions(schema)
        G = int(np.prod([schema.attributes[i].size for i in prot], dtype=np.int64))
        K = int(np.prod([schema.attributes[i].size for i in rest], dtype=np.int64))
        return cls(schema, np.broadcast_to(np.eye(K), (G, K, K)).copy(), np.zeros((G, K), bool))


@dataclass
class TotResult:
    status: str
    map: TotMap | None
    objective: float = np.nan
    violations: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL


def _group_and_cell(schema: Schema, rows: np.ndarray):
    prot, rest = _split_positions(schema)
    gshape = tuple(schema.attributes[i].size for i in prot)
    ushape = tuple(schema.attributes[i].size for i in rest)
    g = np.ravel_multi_index(rows[:, prot].T, gshape) if prot else np.zeros(len(rows), np.int64)
    u = np.ravel_multi_index(rows[:, rest].T, ushape)
    return g, u, gshape, ushape


def build_tot(d: Dataset, distortion: DistortionSpec,
              constraints: TotConstraints) -> tuple[LinearProgram, TotIndex]:
    """Assemble the TOT linear program for the empirical distribution of ``d``."""
    schema = d.schema
    prot, rest = _split_positions(schema)
    if d.n == 0:
        raise ValueError("cannot build a transform from an empty dataset")
    g, u, gshape, ushape = _group_and_cell(schema, d.rows)
    G, K = int(np.prod(gshape, dtype=np.int64)), int(np.prod(ushape, dtype=np.int64))
    if distortion.phi.shape != (K, K):
        raise ValueError(f"distortion table must be {K} x {K}")
    w = d.weight_vector()
    total = w.sum()
    mass = np.bincount(g * K + u, weights=w, minlength=G * K) / total
    support = np.flatnonzero(mass > 0)
    cells = np.stack([support // K, support % K], axis=1)
    cell_mass = mass[support]
    n_cells = len(support)

    allowed = ~distortion.forbidden()
    var_cell, var_v = [], []
    for ci, (_, uu) in enumerate(cells):
        vs = np.flatnonzero(allowed[uu])
        var_cell.append(np.full(vs.size, ci))
        var_v.append(vs)
    var_cell = np.concatenate(var_cell)
    var_v = np.concatenate(var_v)
    n_q = var_v.size

    p_v = np.bincount(cells[:, 1], weights=cell_mass, minlength=K)
    t_cells = np.flatnonzero((p_v > 0) | (np.bincount(var_v, minlength=K) > 0))
    t_pos = np.full(K, -1)
    t_pos[t_cells] = np.arange(t_cells.size)
    n_t = t_cells.size
    n = n_q + n_t
    c = np.concatenate([np.zeros(n_q), np.full(n_t, 0.5)])

    # simplex rows
    A_eq = sp.csr_matrix((np.ones(n_q), (var_cell, np.arange(n_q))), shape=(n_cells, n))
    b_eq = np.ones(n_cells)

    rows, cols, vals, rhs, labels = [], [], [], [], []
    r = 0
    # total variation: +/-(sum_cells p(cell) q(v|cell) - p(v)) <= t_v
    qv_rows = t_pos[var_v]
    coef = cell_mass[var_cell]
    for sign in (1.0, -1.0):
        rows += [r + qv_rows, r + np.arange(n_t)]
        cols += [np.arange(n_q), n_q + np.arange(n_t)]
        vals += [sign * coef, -np.ones(n_t)]
        rhs.append(sign * p_v[t_cells])
        labels += ["tvd"] * n_t
        r += n_t
    # distortion: probability of exceeding each threshold
    phi_var = distortion.phi[cells[var_cell, 1], var_v]
    if distortion.scope == "cell":
        row_key = var_cell
        row_coef = np.ones(n_q)
    else:
        row_key = cells[var_cell, 1]
        row_coef = coef / p_v[row_key]
    for t, cb in zip(distortion.thresholds, distortion.c_bounds):
        if cb <= 0 or cb >= 1:
            continue   # zero bounds removed the variables; unit bounds are vacuous
        sel = phi_var > t
        keys = np.unique(row_key[sel])
        if keys.size == 0:
            continue
        row_of = np.full(max(n_cells, K), -1)
        row_of[keys] = r + np.arange(keys.size)
        rows.append(row_of[row_key[sel]])
        cols.append(np.flatnonzero(sel))
        vals.append(row_coef[sel])
        rhs.append(np.full(keys.size, cb))
        labels += ["distortion"] * keys.size
        r += keys.size
    # discrimination: q(y | g1) within [(1-eta), (1+eta)] * q(y | g2)
    out_col = rest.index(schema.outcome)
    v_y = np.unravel_index(var_v, ushape)[out_col]
    fav = schema.favorable_index()
    g_mass = np.bincount(cells[:, 0], weights=cell_mass, minlength=G)
    present = np.flatnonzero(g_mass > 0)
    var_g = cells[var_cell, 0]
    cond_coef = coef / np.where(g_mass[var_g] > 0, g_mass[var_g], 1.0)
    for y_level in range(2):
        y_flag = 1 if y_level == fav else 0
        in_y = v_y == y_level
        for g1 in present:
            for g2 in present:
                if g1 == g2:
                    continue
                eta = constraints.get(y_flag, int(g1), int(g2))
                if not np.isfinite(eta):
                    continue
                s1 = in_y & (var_g == g1)
                s2 = in_y & (var_g == g2)
                if constraints.form == "ratio":
                    # q(y|g1) - (1+eta) q(y|g2) <= 0 and (1-eta) q(y|g2) - q(y|g1) <= 0
                    hi2, lo2, rhs_pair = 1 + eta, 1 - eta, np.zeros(2)
                else:
                    # q(y|g1) - q(y|g2) <= eta in both directions
                    if g1 > g2:
                        continue
                    hi2, lo2, rhs_pair = 1.0, 1.0, np.full(2, eta)
                rows += [np.full(s1.sum(), r), np.full(s2.sum(), r)]
                cols += [np.flatnonzero(s1), np.flatnonzero(s2)]
                vals += [cond_coef[s1], -hi2 * cond_coef[s2]]
                rows += [np.full(s1.sum(), r + 1), np.full(s2.sum(), r + 1)]
                cols += [np.flatnonzero(s1), np.flatnonzero(s2)]
                vals += [-cond_coef[s1], lo2 * cond_coef[s2]]
                rhs.append(rhs_pair)
                labels += ["discrimination"] * 2
                r += 2
    A_ub = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(r, n))
    lp = LinearProgram(c, A_eq, b_eq, A_ub, np.concatenate(rhs), lo=np.zeros(n),
                       ub_groups=labels, eq_groups=["simplex"] * n_cells)
    index = TotIndex(schema, prot, rest, G, K, cells, cell_mass, var_cell, var_v, n_q,
                     t_cells, out_col)
    return lp, index


def solve_and_extract_tot(lp: LinearProgram, index: TotIndex, tol: float = 1e-8,
                          max_iter: int = 200) -> TotResult:
    """Solve the TOT program; infeasibility is returned as a status, not raised."""
    sol = solve_lp(lp, tol=tol, max_iter=max_iter)
    if sol.status != OPTIMAL:
        status = INFEASIBLE if sol.status == INFEASIBLE else sol.status
        return TotResult(status, None)
    report = check_feasibility(lp, sol.x)
    q = np.clip(sol.x[:index.n_q], 0.0, None)
    tmap = TotMap.identity(index.schema)
    seen = np.zeros((index.n_groups, index.K), bool)
    cond = np.zeros((len(index.cells), index.K))
    cond[index.var_cell, index.var_v] = q
    sums = cond.sum(axis=1, keepdims=True)
    cond /= np.where(sums > 0, sums, 1.0)
    gs, us = index.cells[:, 0], index.cells[:, 1]
    tmap.cond[gs, us] = cond
    seen[gs, us] = True
    tmap = TotMap(index.schema, tmap.cond, seen)
    return TotResult(OPTIMAL, tmap, sol.objective_value, report.by_group)


def fit_tot(d: Dataset, distortion: DistortionSpec, constraints: TotConstraints, **kw) -> TotResult:
    lp, index = build_tot(d, distortion, constraints)
    return solve_and_extract_tot(lp, index, **kw)


def apply_tot(d: Dataset, tmap: TotMap, seed=None) -> Dataset:
    """Resample each record's non-protected part from its conditional; groups stay fixed."""
    g, u, _, ushape = _group_and_cell(d.schema, d.rows)
    cdf = np.cumsum(tmap.cond[g, u], axis=1)
    draw = as_generator(seed).random(d.n)
    v = (cdf < draw[:, None] * cdf[:, -1:]).sum(axis=1)
    v = np.minimum(v, cdf.shape[1] - 1)
    rows = d.rows.copy()
    prot, rest = _split_positions(d.schema)
    rows[:, rest] = np.stack(np.unravel_index(v, ushape), axis=1)
    return Dataset(d.schema, rows, d.weights)


def transformed_marginal(d: Dataset, tmap: TotMap) -> np.ndarray:
    """Expected joint of (g, v) after applying ``tmap`` to ``d``, shape (G, K)."""
    g, u, _, _ = _group_and_cell(d.schema, d.rows)
    out = np.zeros(tmap.cond.shape[:2])
    np.add.at(out, g, tmap.cond[g, u] * d.weight_vector()[:, None])
    return out / d.total_weight


# -- RW --------------------------------------------------------------------------------

@dataclass
class RwWeights:
    """Weight per (group, outcome) cell; group indexes the composite protected value."""

    w: dict
    protected: tuple

    def weights_for(self, d: Dataset) -> np.ndarray:
        g, y = _rw_codes(d, self.protected)
        return np.array([self.w.get((int(a), int(b)), 0.0) for a, b in zip(g, y)])

    def apply(self, d: Dataset) -> Dataset:
        return d.with_weights(d.weight_vector() * self.weights_for(d))


def _rw_codes(d: Dataset, protected):
    pos = [d.schema.position(p) for p in protected]
    shape = tuple(d.schema.attributes[p].size for p in pos)
    g = np.ravel_multi_index(d.rows[:, pos].T, shape)
    return g, d.rows[:, d.schema.outcome]


def compute_rw_weights(d: Dataset, protected=None) -> RwWeights:
    """W(g, c) = P(g) P(c) / P(g, c) from the (weighted) empirical distribution."""
    if protected is None:
        protected = [d.schema.names[i] for i in d.schema.protected]
    elif isinstance(protected, (str, int)):
        protected = [protected]
    protected = tuple(protected)
    g, y = _rw_codes(d, protected)
    w = d.weight_vector()
    total = w.sum()
    G = int(g.max(initial=0)) + 1
    joint = np.zeros((max(G, 1), 2))
    np.add.at(joint, (g, y), w)
    joint /= total
    pg, py = joint.sum(axis=1), joint.sum(axis=0)
    out = {}
    for a in range(joint.shape[0]):
        for b in range(2):
            if joint[a, b] > 0:
                out[(a, b)] = float(pg[a] * py[b] / joint[a, b])
            elif pg[a] > 0:
                warnings.warn(f"empty (group={a}, outcome={b}) cell; weight set to 0")
                out[(a, b)] = 0.0
    return RwWeights(out, protected)


def reweigh(d: Dataset, protected=None) -> Dataset:
    return compute_rw_weights(d, protected).apply(d)
