import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dataset, toy_schema
from fairsynth.aim import (AimParams, AimState, Measurement, Workload, anneal, fit_aim, fit_joint,
                           init_aim, rescale_to_budget, run_aim, select_marginal,
                           selection_scores)
from fairsynth.privacy import Accountant, EpsDelta, eps_delta_to_rho, round_cost
from fairsynth.tabular import (Attribute, JointDistribution, Marginal, MarginalSpec, Schema,
                               compute_marginal, marginal_of_joint)

SQ = math.sqrt(2 / math.pi)


def two_by_two():
    return Schema((Attribute("a", ("0", "1")), Attribute("b", ("0", "1"))))


def meas(spec, counts, sigma=1.0):
    return Measurement(spec, Marginal(spec, np.asarray(counts, float)), sigma)


def test_workload_weights():
    s = toy_schema((3,), protected=1)
    w = Workload.all_k_way(s, 2)
    assert len(w) == 3
    # each pair overlaps itself in 2 attributes and each other pair in 1
    assert w.weights == (4.0, 4.0, 4.0)
    w1 = Workload.from_specs([MarginalSpec((0,)), MarginalSpec((0, 1))])
    assert w1.weights == (2.0, 3.0)
    with pytest.raises(ValueError):
        Workload.from_specs([MarginalSpec((0,)), MarginalSpec((0,))])


def test_fit_joint_exact_full_measurement():
    s = toy_schema((3,))
    rng = np.random.default_rng(0)
    target = rng.integers(1, 50, s.domain_size).astype(float)
    full = MarginalSpec(tuple(range(len(s))))
    hist = []
    p = fit_joint(s, [meas(full, target)], iters=5000, history=hist)
    np.testing.assert_allclose(p.probs * target.sum(), target, atol=1e-4)
    assert hist[-1] < 1e-10


def test_fit_joint_product_of_consistent_marginals():
    s = two_by_two()
    a, b = np.array([30.0, 70.0]), np.array([80.0, 20.0])
    p = fit_joint(s, [meas(MarginalSpec((0,)), a), meas(MarginalSpec((1,)), b)], iters=3000)
    np.testing.assert_allclose(p.probs, np.outer(a / 100, b / 100).ravel(), atol=1e-6)


def test_fit_joint_sigma_weighted_blend():
    s = two_by_two()
    spec = MarginalSpec((0,))
    y1, s1 = np.array([40.0, 60.0]), 1.0
    y2, s2 = np.array([70.0, 30.0]), 3.0
    p = fit_joint(s, [meas(spec, y1, s1), meas(spec, y2, s2)], iters=3000, total=100.0)
    blend = (y1 / s1 + y2 / s2) / (1 / s1 + 1 / s2)
    np.testing.assert_allclose(marginal_of_joint(p, spec).counts * 100, blend, atol=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=20)
def test_fit_joint_objective_monotone(seed):
    s = toy_schema((3,), protected=1)
    rng = np.random.default_rng(seed)
    ms = []
    for attrs in [(0, 1), (1, 2), (0, 2)]:
        spec = MarginalSpec(attrs)
        ms.append(meas(spec, rng.normal(20, 8, spec.size(s)), rng.uniform(0.5, 4)))
    hist = []
    fit_joint(s, ms, iters=200, history=hist)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def _state(s, joint, sigma, xi, total):
    return AimState(sigma, xi, [], joint, Accountant(1.0), total)


def test_scores_match_hand_oracle():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 200, 4)
    w = Workload.all_k_way(s, 2)
    r = np.random.default_rng(1).random(s.domain_size)
    joint = JointDistribution(s, r / r.sum())
    state = _state(s, joint, 2.5, 0.3, d.total_weight)
    got = selection_scores(state, d, w)
    t = joint.tensor()
    for j, (spec, wt) in enumerate(w.entries):
        shape = [s.shape[a] for a in spec.attrs]
        data = np.zeros(shape)
        for row in d.rows:
            data[tuple(row[list(spec.attrs)])] += 1
        model = np.zeros(shape)
        for cell in itertools.product(*[range(k) for k in s.shape]):
            model[tuple(cell[a] for a in spec.attrs)] += t[cell] * d.n
        oracle = wt * (np.abs(data - model).sum() - SQ * 2.5 * data.size)
        assert got[j] == pytest.approx(oracle, abs=1e-12 * max(1, abs(oracle)) + 1e-9)


def test_scores_at_zero_residual():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 100, 2)
    w = Workload.all_k_way(s, 2)
    state = _state(s, JointDistribution.empirical(d), 1.5, 0.3, d.total_weight)
    got = selection_scores(state, d, w)
    expect = [-wt * SQ * 1.5 * spec.size(s) for spec, wt in w.entries]
    np.testing.assert_allclose(got, expect, atol=1e-9)


def test_grossly_misfit_marginal_is_selected():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 500, 3)
    emp = JointDistribution.empirical(d).tensor().copy()
    # swap the outcome labels so every marginal containing y is badly off
    bad = emp.copy()
    bad[:, :, 0], bad[:, :, 1] = emp[:, :, 1], emp[:, :, 0]
    state = _state(s, JointDistribution(s, bad.ravel() / bad.sum()), 0.1, 1e6, d.total_weight)
    w = Workload.from_specs([MarginalSpec((0, 1)), MarginalSpec((1, 2)), MarginalSpec((0,))])
    scores = selection_scores(state, d, w)
    target = w.specs[int(np.argmax(scores))]
    rng = np.random.default_rng(0)
    picks = {select_marginal(state, d, w, rng) for _ in range(1000)}
    assert picks == {target} and 2 in target.attrs


def test_anneal_rules():
    s = two_by_two()
    j = JointDistribution.uniform(s)
    m = meas(MarginalSpec((0,)), [50, 50], 4.0)
    state = _state(s, j, 4.0, 0.2, 100.0)
    assert anneal(state, j, m) == (2.0, 0.4)
    far = JointDistribution(s, np.array([0.97, 0.01, 0.01, 0.01]))
    state = _state(s, far, 4.0, 0.2, 100.0)
    assert anneal(state, j, m) == (4.0, 0.2)


def test_rescale_exhausts_remaining():
    # pick (sigma, xi) costing 0.08 with equal shares, then rescale to 0.02
    sigma, xi = 1 / math.sqrt(0.08), math.sqrt(8 * 0.04)
    assert round_cost(sigma, xi) == pytest.approx(0.08)
    s2, x2 = rescale_to_budget(sigma, xi, 0.02)
    assert round_cost(s2, x2) == pytest.approx(0.02, abs=1e-9)
    assert x2 * s2 == pytest.approx(xi * sigma)


def test_init_spends_one_way_round_on_compas(compas_split):
    train, _ = compas_split
    budget = EpsDelta(1.0, 1e-9)
    state = init_aim(train, Workload.all_k_way(train.schema), budget, seed=0)
    rho0 = eps_delta_to_rho(budget).rho
    assert state.accountant.spent == pytest.approx(6 / (2 * state.sigma_t ** 2), rel=1e-12)
    assert state.accountant.spent == pytest.approx(0.1 * rho0, rel=1e-9)


def test_init_vanishing_noise_recovers_one_way():
    s = toy_schema((4,), protected=2)
    d = random_dataset(s, 2000, 5)
    state = init_aim(d, Workload.all_k_way(s), EpsDelta(1e6, 1e-9), seed=1)
    for a in range(len(s)):
        spec = MarginalSpec((a,))
        emp = compute_marginal(d, spec).normalized()
        assert 0.5 * np.abs(marginal_of_joint(state.joint, spec).counts - emp).sum() < 1e-3


def test_aim_is_deterministic():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 300, 6)
    w = Workload.all_k_way(s)
    a = fit_aim(d, w, EpsDelta(1.0, 1e-9), seed=3)
    b = fit_aim(d, w, EpsDelta(1.0, 1e-9), seed=3)
    assert np.array_equal(a.joint.probs, b.joint.probs) and a.log == b.log
    assert np.array_equal(run_aim(d, w, EpsDelta(1.0, 1e-9), seed=3).rows,
                          run_aim(d, w, EpsDelta(1.0, 1e-9), seed=3).rows)


def test_aim_spends_exactly_the_budget():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 300, 7)
    state = fit_aim(d, Workload.all_k_way(s), EpsDelta(2.0, 1e-9), seed=0)
    assert state.accountant.spent == pytest.approx(state.accountant.budget.rho, rel=1e-9)
    assert state.accountant.spent <= state.accountant.budget.rho + Accountant.TOL


def test_aim_vanishing_noise_two_way_consistency():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 5000, 8)
    out = run_aim(d, Workload.all_k_way(s, 2), EpsDelta(1e4, 1e-9), seed=0)
    assert out.n == d.n and out.schema == s
    for attrs in itertools.combinations(range(3), 2):
        spec = MarginalSpec(attrs)
        tvd = 0.5 * np.abs(compute_marginal(out, spec).normalized()
                           - compute_marginal(d, spec).normalized()).sum()
        assert tvd < 0.01


def test_iid_sampler_option():
    s = toy_schema((3,), protected=1)
    d = random_dataset(s, 300, 9)
    out = run_aim(d, Workload.all_k_way(s), EpsDelta(1.0, 1e-9), n_out=50,
                  params=AimParams(sampler="iid"), seed=0)
    assert out.n == 50
    with pytest.raises(ValueError):
        run_aim(d, Workload.all_k_way(s), EpsDelta(1.0, 1e-9), params=AimParams(sampler="x"))
