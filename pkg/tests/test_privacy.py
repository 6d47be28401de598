import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from fairsynth.privacy import (Accountant, BudgetExhausted, EpsDelta, Rho, Sensitivity,
                               eps_delta_to_rho, exponential_mechanism,
                               exponential_probabilities, gaussian_mechanism,
                               gaussian_sigma_for_rho, rho_to_eps_delta, round_cost, spend)


def grid_delta(rho, eps, points=1_000_000):
    """Minimum of the conversion bound over a dense log grid of alpha in (1, 1e4]."""
    am1 = np.geomspace(1e-7, 1e4 - 1, points)
    alpha = 1 + am1
    log_d = am1 * (alpha * rho - eps) - np.log(am1) + alpha * np.log1p(-1 / alpha)
    return float(min(1.0, np.exp(log_d.min())))


def test_conversion_matches_grid_oracle():
    assert rho_to_eps_delta(0.1, 1.0) == pytest.approx(grid_delta(0.1, 1.0), rel=1e-6)
    # frozen from the grid oracle above
    assert rho_to_eps_delta(0.1, 1.0) == pytest.approx(0.0089332458, rel=1e-7)


def test_conversion_monotone_and_limits():
    d = [rho_to_eps_delta(0.5, e) for e in (0.0, 1.0, 10.0)]
    assert d[0] >= d[1] >= d[2]
    assert rho_to_eps_delta(0.01, 50.0) < 1e-100
    assert rho_to_eps_delta(Rho(0.2), 1.0) == rho_to_eps_delta(0.2, 1.0)
    with pytest.raises(ValueError):
        rho_to_eps_delta(0.0, 1.0)


@given(st.floats(0.001, 5.0), st.floats(0.001, 5.0), st.floats(0.0, 20.0))
def test_conversion_monotone_grid(rho1, rho2, eps):
    lo, hi = sorted((rho1, rho2))
    assert rho_to_eps_delta(lo, eps) <= rho_to_eps_delta(hi, eps) * (1 + 1e-9)
    assert rho_to_eps_delta(lo, eps + 0.5) <= rho_to_eps_delta(lo, eps) * (1 + 1e-9)


def test_eps_delta_to_rho_values():
    r1 = eps_delta_to_rho(EpsDelta(1.0, 1e-9)).rho
    r10 = eps_delta_to_rho(EpsDelta(10.0, 1e-9)).rho
    assert r1 == pytest.approx(0.0149731, rel=1e-5)
    assert r10 == pytest.approx(1.0908, rel=1e-4)
    assert r10 > r1
    assert eps_delta_to_rho(EpsDelta(1.0, 1e-12)).rho < r1
    assert rho_to_eps_delta(r1, 1.0) <= 1e-9
    assert rho_to_eps_delta(r1 * (1 + 1e-9), 1.0) > 1e-9 * (1 - 1e-6)
    with pytest.raises(ValueError):
        eps_delta_to_rho(EpsDelta(1.0, 0.0))


@given(st.floats(0.01, 20.0), st.floats(-12, -2))
def test_eps_delta_round_trip(eps, log_delta):
    delta = 10 ** log_delta
    rho = eps_delta_to_rho(EpsDelta(eps, delta)).rho
    assert rho_to_eps_delta(rho, eps) <= delta
    assert rho_to_eps_delta(rho * (1 + 1e-8), eps) > delta * 0.999


def test_gaussian_sigma():
    assert gaussian_sigma_for_rho(Sensitivity(1.0), Rho(0.5)) == pytest.approx(1.0)
    assert gaussian_sigma_for_rho(Sensitivity(2.0), 0.5) == pytest.approx(2.0)
    assert gaussian_sigma_for_rho(1.0, 0.125) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        gaussian_sigma_for_rho(1.0, 0.0)


def test_gaussian_mechanism():
    v = np.arange(5.0)
    assert np.array_equal(gaussian_mechanism(v, 0.0, 1), v)
    assert np.array_equal(gaussian_mechanism(v, 1.0, 3), gaussian_mechanism(v, 1.0, 3))
    noise = gaussian_mechanism(np.zeros(100_000), 1.0, 5)
    assert abs(noise.mean()) < 0.02 and abs(noise.std() - 1) < 0.02
    with pytest.raises(ValueError):
        gaussian_mechanism(v, -1.0)


def _draws(scores, sens, xi, n, seed):
    rng = np.random.default_rng(seed)
    return np.array([exponential_mechanism(scores, sens, xi, rng) for _ in range(n)])


def test_exponential_uniform_when_scores_tie():
    draws = _draws(np.zeros(5), Sensitivity(1.0, "l1"), 1.0, 100_000, 0)
    assert chisquare(np.bincount(draws, minlength=5)).pvalue > 0.01


def test_exponential_argmax_limit():
    scores = np.array([0.0, 3.0, 1.0, 2.9])
    draws = _draws(scores, Sensitivity(1.0, "l1"), 1e6, 10_000, 1)
    assert (draws == 1).all()


def test_exponential_softmax_frequency():
    draws = _draws(np.array([0.0, 1.0]), Sensitivity(1.0, "l1"), 2.0, 100_000, 2)
    e = math.e
    assert abs(draws.mean() - e / (1 + e)) < 0.01


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-1e3, 1e3),
       st.integers(0, 2 ** 32 - 1))
def test_exponential_shift_invariance(scores, shift, seed):
    scores = np.array(scores)
    p = exponential_probabilities(scores, 1.0, 0.7)
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(exponential_probabilities(scores + shift, 1.0, 0.7), p, atol=1e-9)
    a = exponential_mechanism(scores, 1.0, 0.7, seed)
    b = exponential_mechanism(scores + shift, 1.0, 0.7, seed)
    # one uniform per draw, so equal probabilities give equal selections
    assert a == b


def test_exponential_errors():
    with pytest.raises(ValueError):
        exponential_mechanism([], 1.0, 1.0)
    with pytest.raises(ValueError):
        exponential_mechanism([1.0], 1.0, 0.0)


def test_accountant():
    a = Accountant(1.0)
    spend(a, 0.0)
    assert a.spent == 0
    a.spend(0.5).spend(0.5)
    assert a.spent == pytest.approx(1.0)
    with pytest.raises(BudgetExhausted):
        a.spend(1e-6)
    b = Accountant(Rho(5.0))
    b.spend(round_cost(1.0, 2.0))
    assert b.spent == pytest.approx(1.0)
    with pytest.raises(ValueError):
        b.spend(-1.0)


@given(st.lists(st.floats(0, 0.3), max_size=30), st.floats(0.1, 2.0))
def test_accountant_never_exceeds_budget(costs, budget):
    a = Accountant(budget)
    for c in costs:
        try:
            a.spend(c)
        except BudgetExhausted:
            pass
        assert a.spent <= budget + Accountant.TOL


def test_parameter_validation():
    with pytest.raises(ValueError):
        EpsDelta(0.0, 1e-9)
    with pytest.raises(ValueError):
        EpsDelta(1.0, 1.0)
    with pytest.raises(ValueError):
        Rho(-1.0)
    with pytest.raises(ValueError):
        Sensitivity(1.0, "l3")
