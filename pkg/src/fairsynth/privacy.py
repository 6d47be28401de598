"""Privacy accounting under zero-concentrated DP and the two basic mechanisms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_ALPHA_MAX = 1e6


class BudgetExhausted(RuntimeError):
    """A spend would push the accountant past its budget."""


@dataclass(frozen=True)
class EpsDelta:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be a positive finite number")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")


@dataclass(frozen=True)
class Rho:
    rho: float

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")


@dataclass(frozen=True)
class Sensitivity:
    value: float
    norm: str = "l2"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("sensitivity must be nonnegative")
        if self.norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2'")


def _as_float(x, attr):
    return float(getattr(x, attr)) if hasattr(x, attr) else float(x)


def _log_delta(log_alpha: float, rho: float, eps: float) -> float:
    alpha = math.exp(log_alpha)
    am1 = math.expm1(log_alpha)
    return (am1 * (alpha * rho - eps) - math.log(am1)
            + alpha * math.log1p(-1.0 / alpha))


def rho_to_eps_delta(rho, epsilon: float) -> float:
    """Smallest delta such that rho-zCDP implies (epsilon, delta)-DP.

    Minimizes the log of exp((a-1)(a*rho-eps))/(a-1) * (1-1/a)^a over a > 1.
    The expression is convex in a, so a golden-section search over log a
    finds the global minimum.
    """
    rho = _as_float(rho, "rho")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    lo, hi = 1e-12, math.log(_ALPHA_MAX)
    f = lambda t: _log_delta(t, rho, epsilon)  # noqa: E731
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > 1e-12:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    best = min(f1, f2, f(lo), f(hi))
    return float(min(1.0, math.exp(best)))


def eps_delta_to_rho(target: EpsDelta) -> Rho:
    """Largest rho whose (epsilon, delta) guarantee meets ``target``."""
    eps, delta = target.epsilon, target.delta
    if delta <= 0:
        raise ValueError("conversion to zCDP needs delta > 0")
    lo, hi = 0.0, max(eps, 1.0)
    while rho_to_eps_delta(hi, eps) <= delta:
        lo, hi = hi, hi * 2.0
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if rho_to_eps_delta(mid, eps) <= delta:
            lo = mid
        else:
            hi = mid
    return Rho(lo)


def gaussian_sigma_for_rho(sens, rho) -> float:
    delta2 = _as_float(sens, "value")
    rho = _as_float(rho, "rho")
    if not rho > 0:
        raise ValueError("rho must be positive")
    return delta2 / math.sqrt(2.0 * rho)


def gaussian_mechanism(values, sigma: float, seed=None) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return values.copy()
    return values + as_generator(seed).normal(0.0, sigma, size=values.shape)


def exponential_probabilities(scores, sens, xi: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("scores must be non-empty")
    if not xi > 0:
        raise ValueError("xi must be positive")
    delta = _as_float(sens, "value")
    if delta <= 0:
        raise ValueError("sensitivity must be positive")
    logits = xi * (scores - scores.max()) / (2.0 * delta)
    w = np.exp(logits)
    return w / w.sum()


def exponential_mechanism(scores, sens, xi: float, seed=None) -> int:
    """Index i drawn with probability proportional to exp(xi * u_i / (2 * sens))."""
    p = exponential_probabilities(scores, sens, xi)
    u = as_generator(seed).random()
    # inverse CDF keeps the draw a function of one uniform, so score shifts
    # that leave p unchanged also leave the selection unchanged
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), p.size - 1))


def round_cost(sigma: float | None, xi: float | None) -> float:
    """zCDP cost of one select-and-measure round."""
    cost = 0.0
    if xi:
        cost += xi * xi / 8.0
    if sigma:
        cost += 1.0 / (2.0 * sigma * sigma)
    return cost


class Accountant:
    """Running zCDP spend against a fixed budget."""

    TOL = 1e-12

    def __init__(self, budget):
        self.budget = Rho(_as_float(budget, "rho"))
        self.spent = 0.0

    @property
    def remaining(self) -> float:
        return max(0.0, self.budget.rho - self.spent)

    def can_afford(self, cost: float) -> bool:
        return self.spent + cost <= self.budget.rho + self.TOL

    def spend(self, cost: float) -> "Accountant":
        if cost < 0:
            raise ValueError("cost must be nonnegative")
        if not self.can_afford(cost):
            raise BudgetExhausted(
                f"spending {cost:.6g} exceeds remaining budget {self.remaining:.6g}")
        self.spent += cost
        return self

    def copy(self) -> "Accountant":
        other = Accountant(self.budget)
        other.spent = self.spent
        return other

    def __repr__(self):
        return f"Accountant(budget={self.budget.rho:.6g}, spent={self.spent:.6g})"


def spend(a: Accountant, cost: float) -> Accountant:
    return a.spend(cost)
