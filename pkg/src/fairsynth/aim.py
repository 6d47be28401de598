"""Adaptive marginal-based synthesis on an explicit dense joint.

The model is the full joint distribution over the schema's domain. Each round
selects a workload marginal with the exponential mechanism, measures it with
Gaussian noise, refits the joint by entropic mirror descent, and anneals the
noise scales when a measurement stops being informative.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .privacy import (Accountant, EpsDelta, Sensitivity,
                      eps_delta_to_rho, exponential_mechanism, gaussian_mechanism,
                      round_cost)
from .rng import stream
from .tabular import (Dataset, JointDistribution, Marginal, MarginalSpec, Schema,
                      compute_marginal, marginal_of_joint, sample_dataset,
                      sample_rounded)

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class Workload:
    specs: tuple[MarginalSpec, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.specs)) != len(self.specs):
            raise ValueError("workload specs must be distinct")
        if len(self.specs) != len(self.weights):
            raise ValueError("one weight per spec")

    @classmethod
    def from_specs(cls, specs) -> "Workload":
        """Weights each spec by its total attribute overlap with the workload."""
        specs = tuple(specs)
        weights = tuple(float(sum(len(a & b) for b in specs)) for a in specs)
        return cls(specs, weights)

    @classmethod
    def all_k_way(cls, schema: Schema, k: int = 2) -> "Workload":
        k = min(k, len(schema))
        return cls.from_specs(MarginalSpec(c) for c in itertools.combinations(range(len(schema)), k))

    def __len__(self):
        return len(self.specs)

    @property
    def entries(self):
        return list(zip(self.specs, self.weights))


@dataclass(frozen=True)
class Measurement:
    spec: MarginalSpec
    noisy: Marginal
    sigma: float
    round: int = 0

    def __post_init__(self):
        if self.noisy.spec != self.spec:
            raise ValueError("measurement spec does not match its marginal")
        if not self.sigma > 0:
            raise ValueError("measurement sigma must be positive")


@dataclass
class AimParams:
    planned_rounds: int = 16
    init_fraction: float = 0.1      # share of rho spent on the 1-way round
    init_iters: int = 2000
    round_iters: int = 500
    anneal: bool = True
    max_rounds: int = 10_000
    sampler: str = "rounded"    # or "iid"


@dataclass
class AimState:
    sigma_t: float
    xi_t: float
    measurements: list
    joint: JointDistribution
    accountant: Accountant
    total: float
    round: int = 0
    log: list = field(default_factory=list)


# -- joint estimation ----------------------------------------------------------

class _Projector:
    """Stacked sparse map from the flat joint to all measured marginal cells."""

    def __init__(self, schema: Schema, measurements):
        groups: dict[MarginalSpec, list] = {}
        for m in measurements:
            groups.setdefault(m.spec, []).append(m)
        cells = np.arange(schema.domain_size)
        coords = np.unravel_index(cells, schema.shape)
        rows, y, w = [], [], []
        offset = 0
        for spec, ms in groups.items():
            shape = spec.shape(schema)
            idx = np.ravel_multi_index(tuple(coords[a] for a in spec.attrs), shape)
            rows.append(idx + offset)
            # several noisy copies of one marginal collapse to their
            # 1/sigma-weighted mean with summed weight
            inv = np.array([1.0 / m.sigma for m in ms])
            stacked = np.stack([m.noisy.counts for m in ms])
            y.append(inv @ stacked / inv.sum())
            w.append(np.full(int(np.prod(shape)), inv.sum()))
            offset += int(np.prod(shape))
        data = np.ones(schema.domain_size * len(groups))
        self.M = sp.csr_matrix(
            (data, (np.concatenate(rows), np.tile(cells, len(groups)))),
            shape=(offset, schema.domain_size))
        self.MT = self.M.T.tocsr()
        self.y = np.concatenate(y)
        self.w = np.concatenate(w)
        self.weight_sum = float(sum(1.0 / m.sigma for m in measurements))

    def objective(self, p):
        r = self.M @ p - self.y
        return float(np.dot(self.w, r * r))

    def value_and_grad(self, p):
        r = self.M @ p - self.y
        return float(np.dot(self.w, r * r)), self.MT @ (2.0 * self.w * r)


def _default_total(measurements) -> float:
    inv = np.array([1.0 / m.sigma for m in measurements])
    sums = np.array([m.noisy.counts.sum() for m in measurements])
    return max(float(inv @ sums / inv.sum()), 1.0)


def fit_joint(schema: Schema, measurements, iters: int = 1000, step: float | None = None,
              total: float | None = None, init: JointDistribution | None = None,
              history: list | None = None) -> JointDistribution:
    """Fit a joint to noisy marginals by entropic mirror descent.

    Minimizes sum_i ||M_i p - y_i||^2 / sigma_i over nonnegative p summing to
    ``total`` (the data size; defaults to a weighted mean of the measured
    totals). The step grows after each accepted move and is halved until the
    objective does not increase, so the objective sequence is monotone.
    Starting from the uniform joint, the iterates stay in the exponential
    family of the measured marginals, which gives the maximum-entropy
    solution among exact fits.
    """
    if not measurements:
        raise ValueError("fit_joint needs at least one measurement")
    for m in measurements:
        m.spec.validate(schema)
    proj = _Projector(schema, measurements)
    n = float(total) if total is not None else _default_total(measurements)
    p = (init.probs if init is not None else
         np.full(schema.domain_size, 1.0 / schema.domain_size)) * n
    p = np.asarray(p, dtype=float)
    if step is None:
        step = 1.0 / (n * 2.0 * proj.weight_sum)
    obj, grad = proj.value_and_grad(p)
    if history is not None:
        history.append(obj)
    logp = np.log(np.maximum(p, 1e-300))
    for _ in range(int(iters)):
        accepted = False
        while step > 1e-300:
            cand_log = logp - step * grad
            cand_log -= cand_log.max()
            cand = np.exp(cand_log)
            cand *= n / cand.sum()
            new_obj = proj.objective(cand)
            if new_obj <= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        change = obj - new_obj
        p, obj = cand, new_obj
        logp = np.log(np.maximum(p, 1e-300))
        obj, grad = proj.value_and_grad(p)
        if history is not None:
            history.append(obj)
        step *= 1.5
        if change <= 1e-9 * max(obj + change, 1e-300):
            break
    return JointDistribution.from_counts(schema, p)


# -- selection and annealing -----------------------------------------------------

def selection_scores(state: AimState, d: Dataset, workload: Workload) -> np.ndarray:
    """Weighted expected-improvement score of every workload marginal."""
    out = np.empty(len(workload))
    for j, (spec, w) in enumerate(workload.entries):
        data = compute_marginal(d, spec).counts
        model = marginal_of_joint(state.joint, spec).counts * state.total
        n_cells = data.size
        out[j] = w * (np.abs(data - model).sum() - _SQRT_2_OVER_PI * state.sigma_t * n_cells)
    return out


def select_marginal(state: AimState, d: Dataset, workload: Workload, seed=None) -> MarginalSpec:
    if len(workload) == 0:
        raise RuntimeError("no candidate marginals to select from")
    scores = selection_scores(state, d, workload)
    sens = Sensitivity(max(workload.weights), "l1")
    return workload.specs[exponential_mechanism(scores, sens, state.xi_t, seed)]


def anneal(state: AimState, prev_joint: JointDistribution, new_measurement: Measurement):
    """Halve sigma and double xi when the last measurement barely moved the model."""
    spec = new_measurement.spec
    new = marginal_of_joint(state.joint, spec).counts * state.total
    old = marginal_of_joint(prev_joint, spec).counts * state.total
    threshold = _SQRT_2_OVER_PI * state.sigma_t * new.size
    if np.abs(new - old).sum() <= threshold:
        return state.sigma_t / 2.0, state.xi_t * 2.0
    return state.sigma_t, state.xi_t


def rescale_to_budget(sigma: float, xi: float, remaining: float) -> tuple[float, float]:
    """Scale both parts of the round cost by one factor so the round costs ``remaining``."""
    cost = round_cost(sigma, xi)
    f = remaining / cost
    return sigma / math.sqrt(f), xi * math.sqrt(f)


# -- driver ----------------------------------------------------------------------

def init_aim(d: Dataset, workload: Workload, budget: EpsDelta, params: AimParams | None = None,
             seed: int = 0) -> AimState:
    params = params or AimParams()
    if len(workload) == 0:
        raise ValueError("workload must be non-empty")
    rho0 = eps_delta_to_rho(budget).rho
    acct = Accountant(rho0)
    n_attrs = len(d.schema)
    sigma0 = math.sqrt(n_attrs / (2.0 * params.init_fraction * rho0))
    xi0 = math.sqrt(8.0 * (1.0 - params.init_fraction) * rho0 / (2.0 * params.planned_rounds))
    acct.spend(n_attrs / (2.0 * sigma0 ** 2))
    rng = stream(seed, "aim", "init")
    measurements = []
    for a in range(n_attrs):
        spec = MarginalSpec((a,))
        noisy = gaussian_mechanism(compute_marginal(d, spec).counts, sigma0, rng)
        measurements.append(Measurement(spec, Marginal(spec, noisy), sigma0, 0))
    total = d.total_weight
    joint = fit_joint(d.schema, measurements, params.init_iters, total=total)
    return AimState(sigma0, xi0, measurements, joint, acct, total)


def fit_aim(d: Dataset, workload: Workload, budget: EpsDelta, params: AimParams | None = None,
            seed: int = 0) -> AimState:
    """Run the select/measure/fit/anneal loop until the budget is used up."""
    params = params or AimParams()
    state = init_aim(d, workload, budget, params, seed)
    acct = state.accountant
    tol = Accountant.TOL
    while acct.remaining > tol and state.round < params.max_rounds:
        state.round += 1
        t = state.round
        cost = round_cost(state.sigma_t, state.xi_t)
        final = acct.remaining < 2.0 * cost
        if final:
            # last round: use exactly what is left instead of leaving a sliver
            state.sigma_t, state.xi_t = rescale_to_budget(state.sigma_t, state.xi_t, acct.remaining)
            cost = acct.remaining
        spec = select_marginal(state, d, workload, stream(seed, "aim", "select", t))
        data = compute_marginal(d, spec).counts
        noisy = gaussian_mechanism(data, state.sigma_t, stream(seed, "aim", "measure", t))
        acct.spend(cost)
        meas = Measurement(spec, Marginal(spec, noisy), state.sigma_t, t)
        state.measurements.append(meas)
        prev = state.joint
        state.joint = fit_joint(d.schema, state.measurements, params.round_iters,
                                total=state.total, init=prev)
        state.log.append((t, spec.attrs, state.sigma_t, state.xi_t, acct.spent))
        if final:
            break
        if params.anneal:
            state.sigma_t, state.xi_t = anneal(state, prev, meas)
    return state


def run_aim(d: Dataset, workload: Workload, budget: EpsDelta, n_out: int | None = None,
            params: AimParams | None = None, seed: int = 0) -> Dataset:
    params = params or AimParams()
    state = fit_aim(d, workload, budget, params, seed)
    return sample_from(state.joint, d.n if n_out is None else n_out, params.sampler,
                       stream(seed, "aim", "sample"))


def sample_from(joint: JointDistribution, n: int, sampler: str, rng) -> Dataset:
    if sampler == "rounded":
        return sample_rounded(joint, n, rng)
    if sampler == "iid":
        return sample_dataset(joint, n, rng)
    raise ValueError(f"unknown sampler {sampler!r}")
