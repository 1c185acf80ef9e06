from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hazardrisk.errors import ValidationError
from hazardrisk.risk import (Accumulator, HazardAssessment, InjuryLevel, RacSpec, RiskEstimate,
                             aggregate_budgets, continuous_mode_risk, discrete_mode_risk, export_sa_views,
                             human_rates_from_counts, local_sensitivity, mcs_estimate, prb_check, sil_lookup,
                             sobol_first_order, solve_behavior_budget, two_oo_three_failure)
from hazardrisk.rng import stream

prob = st.floats(0, 1)


def rel(a, b):
    return abs(a - b) / abs(b)


# -- injury levels ---------------------------------------------------------------------

def test_injury_levels():
    assert [lvl.value for lvl in InjuryLevel] == ["I1+", "I2+", "I3"]
    assert [lvl.min_ais for lvl in InjuryLevel] == [1, 3, 5]
    assert InjuryLevel.parse("I2+") is InjuryLevel.I2
    assert InjuryLevel.parse("I2") is InjuryLevel.I2
    with pytest.raises(ValidationError):
        InjuryLevel.parse("I4")


# -- HIRA algebra ----------------------------------------------------------------------

def test_discrete_mode_examples():
    assert rel(discrete_mode_risk(2.0e-2, 1.0, 1.0, 0.1), 2.0e-3) < 1e-12
    assert rel(discrete_mode_risk(6e-9, 1.0, 1.0, 0.1), 6e-10) < 1e-12
    assert discrete_mode_risk(2e-2, 0.0, 1.0, 0.1) == 0.0
    with pytest.raises(ValidationError):
        discrete_mode_risk(2e-2, 1.5, 1.0, 0.1)
    with pytest.raises(ValidationError):
        discrete_mode_risk(-1.0, 1.0, 1.0, 0.1)


def test_continuous_mode_examples():
    assert continuous_mode_risk(1.0, 3e-6, 1.0, 1.0) == 3e-6
    assert rel(continuous_mode_risk(0.5, 2e-6, 0.5, 0.2), 1e-7) < 1e-12
    assert continuous_mode_risk(0.0, 5.0, 1.0, 1.0) == 0.0


@given(st.floats(0, 1), prob, prob, prob, st.floats(0.01, 0.99), st.integers(0, 3))
def test_risk_is_multilinear(rate, pb, pc, pi, c, which):
    args = [rate, pb, pc, pi]
    base = discrete_mode_risk(*args)
    args[which] *= c
    assert discrete_mode_risk(*args) == pytest.approx(c * base, rel=1e-12, abs=1e-300)
    cargs = [pb, rate, pc, pi]
    cbase = continuous_mode_risk(*cargs)
    cargs[which] *= c
    assert continuous_mode_risk(*cargs) == pytest.approx(c * cbase, rel=1e-12, abs=1e-300)


def test_budget_inversion():
    pb, flag = solve_behavior_budget(1.0e-9, "discrete", 2.0e-2, 1.0, 0.1)
    assert rel(pb, 5.0e-7) < 1e-12
    assert not flag
    assert solve_behavior_budget(1e-2, "discrete", 2e-2, 1.0, 0.1) == (1.0, True)
    with pytest.raises(ValidationError):
        solve_behavior_budget(1e-9, "discrete", 2e-2, 0.0, 0.1)
    with pytest.raises(ValidationError):
        solve_behavior_budget(1e-9, "sideways", 2e-2, 1.0, 0.1)
    lb, _ = solve_behavior_budget(1e-7, "continuous", 0.5, 0.5, 0.2)
    assert rel(lb, 2e-6) < 1e-12


@given(st.floats(1e-12, 1e-3), st.floats(1e-4, 1), st.floats(1e-3, 1), st.floats(1e-3, 1))
def test_budget_round_trip(budget, rate, pc, pi):
    pb, flag = solve_behavior_budget(budget, "discrete", rate, pc, pi)
    if not flag:
        assert rel(discrete_mode_risk(rate, pb, pc, pi), budget) < 1e-12
    else:
        assert discrete_mode_risk(rate, 1.0, pc, pi) <= budget


def test_hazard_assessment():
    h = HazardAssessment("discrete", 2e-2, 1.0, 1.0, {"I2+": 0.1, "I3": 0.01})
    rates = h.injury_rates()
    assert rel(rates[InjuryLevel.I2], 2e-3) < 1e-12
    with pytest.raises(ValidationError):
        HazardAssessment("discrete", 2e-2, 2.0, 1.0, {"I2+": 0.1})
    with pytest.raises(ValidationError):
        HazardAssessment("weekly", 2e-2, 1.0, 1.0, {})


# -- RAC / PRB ---------------------------------------------------------------------------

def test_human_rates_and_prb():
    rates = human_rates_from_counts(750, 140, 10, 1e9)
    assert rel(rates[InjuryLevel.I2], 1.5e-7) < 1e-12
    assert rel(rates[InjuryLevel.I1], 9.0e-7) < 1e-12
    assert rel(rates[InjuryLevel.I3], 1.0e-8) < 1e-12
    rac = RacSpec(rates, 10)
    assert prb_check({"I2+": 1.0e-8}, rac) == {InjuryLevel.I2: True}
    assert prb_check({"I2+": 0.0}, rac)[InjuryLevel.I2]
    eq = RacSpec({"I2+": 1.0}, 4)
    assert prb_check({"I2+": 0.25}, eq) == {InjuryLevel.I2: False}
    with pytest.raises(ValidationError):
        RacSpec(rates, 1.0)
    with pytest.raises(ValidationError):
        RacSpec({"I2+": 0.0}, 10)


def test_budget_aggregation():
    rac = RacSpec({"I2+": 1.6e-8}, 10)
    single = aggregate_budgets({"HS1": 1.6e-9}, rac)
    assert single.shares["HS1"] == 1.0
    assert not single.passed
    pair = aggregate_budgets([6e-10, 1e-9], RacSpec({"I2+": 1.5e-7}, 10))
    assert rel(pair.total, 1.6e-9) < 1e-12
    assert pair.shares["HS1"] == pytest.approx(0.375, rel=1e-12)
    assert pair.shares["HS2"] == pytest.approx(0.625, rel=1e-12)
    assert pair.passed
    empty = aggregate_budgets({}, rac)
    assert empty.total == 0.0 and empty.passed


# -- SIL ---------------------------------------------------------------------------------

@pytest.mark.parametrize("metric,kind,level", [
    (5e-9, "pfh", 4), (5e-8, "pfh", 3), (5e-7, "pfh", 2), (5e-6, "pfh", 1),
    (5e-5, "pfd", 4), (5e-4, "pfd", 3), (5e-3, "pfd", 2), (5e-2, "pfd", 1),
    (1e-9, "pfh", 4), (1e-8, "pfh", 3), (1e-7, "pfh", 2), (1e-6, "pfh", 1),
    (1e-5, "pfd", 4), (1e-4, "pfd", 3), (1e-3, "pfd", 2), (1e-2, "pfd", 1),
    (1e-3, "pfh", None), (1e-5, "pfh", None), (1e-10, "pfh", None), (1e-1, "pfd", None),
])
def test_sil_table(metric, kind, level):
    assert sil_lookup(metric, kind) == level


def test_sil_errors_and_monotonicity():
    with pytest.raises(ValidationError):
        sil_lookup(0.0)
    with pytest.raises(ValidationError):
        sil_lookup(1e-3, "pfx")
    grid = np.logspace(-9, -5.0001, 400)
    levels = [sil_lookup(x) for x in grid]
    assert all(a >= b for a, b in zip(levels, levels[1:]))


# -- 2oo3 --------------------------------------------------------------------------------

def test_two_oo_three_closed_form():
    p = [Fraction(k, 1002) for k in (1, 2, 3)]
    exact = p[0] * p[1] + p[0] * p[2] + p[1] * p[2] - 2 * p[0] * p[1] * p[2]
    assert exact == Fraction(1835, 167668668)
    got = two_oo_three_failure(*(float(x) for x in p))
    assert rel(got, float(exact)) < 1e-14
    assert f"{got:.1e}" == "1.1e-05"
    assert two_oo_three_failure(0, 0, 0) == 0.0
    assert two_oo_three_failure(1, 1, 1) == 1.0


def test_two_oo_three_brute_force():
    p = (0.1, 0.25, 0.4)
    total = 0.0
    for bits in range(8):
        fails = [(bits >> i) & 1 for i in range(3)]
        w = math.prod(p[i] if fails[i] else 1 - p[i] for i in range(3))
        total += w * (sum(fails) >= 2)
    assert two_oo_three_failure(*p) == pytest.approx(total, rel=1e-14)


@given(prob)
def test_two_oo_three_symmetric_case(p):
    assert two_oo_three_failure(p, p, p) == pytest.approx(3 * p**2 - 2 * p**3, abs=1e-15)


@given(prob, prob, prob, st.floats(0, 1))
def test_two_oo_three_symmetry_and_monotonicity(a, b, c, t):
    v = two_oo_three_failure(a, b, c)
    for perm in ((b, a, c), (c, b, a), (a, c, b)):
        assert two_oo_three_failure(*perm) == pytest.approx(v, abs=1e-15)
    bigger = a + t * (1 - a)
    assert two_oo_three_failure(bigger, b, c) >= v - 1e-15


# -- Monte Carlo estimates -----------------------------------------------------------------

def test_constant_integrand():
    est = mcs_estimate(np.full(100, 0.3))
    assert est.mean == 0.3
    assert est.std == 0.0
    assert est.ci_low == est.ci_high == 0.3


def test_estimate_matches_independent_formula():
    v = stream(1, "mcs").random(1000) * 0.01
    est = mcs_estimate(v)
    s = np.std(v, ddof=1)
    assert est.mean == pytest.approx(np.mean(v), rel=1e-13)
    assert est.std == pytest.approx(s, rel=1e-12)
    assert est.half_width == pytest.approx(1.96 * s / math.sqrt(1000), rel=1e-12)
    assert est.ci_high - est.mean == pytest.approx(est.mean - est.ci_low, rel=1e-12)


def test_estimate_errors():
    with pytest.raises(ValidationError):
        mcs_estimate([0.5])
    with pytest.raises(ValidationError):
        mcs_estimate([0.5, 1.5])


def test_bernoulli_coverage():
    hits = 0
    for rep in range(500):
        est = mcs_estimate(stream(rep, "coverage").random(10_000) < 0.1)
        hits += est.covers(0.1)
    assert 0.93 <= hits / 500 <= 0.97


def test_ci_width_scales_with_sqrt_n():
    ratios = []
    for rep in range(20):
        a = mcs_estimate(stream(rep, "w").random(2500)).half_width
        b = mcs_estimate(stream(rep, "w4").random(10_000)).half_width
        ratios.append(b / a)
    assert np.mean(ratios) == pytest.approx(0.5, rel=0.1)


@settings(max_examples=50)
@given(st.lists(prob, min_size=2, max_size=60), st.randoms(use_true_random=False))
def test_estimate_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = mcs_estimate(values), mcs_estimate(shuffled)
    assert a.mean == b.mean
    assert a.variance == pytest.approx(b.variance, rel=1e-12, abs=1e-300)


@settings(max_examples=50)
@given(st.lists(prob, min_size=2, max_size=40), st.lists(prob, min_size=2, max_size=40))
def test_accumulator_merge(a, b):
    merged = Accumulator.of(a).merge(Accumulator.of(b)).estimate()
    direct = mcs_estimate(a + b)
    assert merged.mean == pytest.approx(direct.mean, rel=1e-12, abs=1e-15)
    assert merged.variance == pytest.approx(direct.variance, rel=1e-9, abs=1e-15)
    assert merged.n == direct.n


def test_rate_scaling_and_formatting():
    est = RiskEstimate(5.60e-5, (1.08e-5 / 1.96) ** 2 * 100_000, 100_000)
    assert est.format() == "5.60e-05 ± 1.08e-05"
    assert est.format(unicode=True) == "5.60×10⁻⁵ ± 1.08×10⁻⁵"
    rate = est.with_rate(2e-2)
    assert rate.rate == pytest.approx(1.12e-6)
    assert rate.rate_half_width == pytest.approx(2.16e-7)
    d = est.to_dict()
    assert d["n"] == 100_000


# -- sensitivity ----------------------------------------------------------------------------

def additive_table(n, seed):
    x1 = stream(seed, "x1").standard_normal(n)
    x2 = stream(seed, "x2").standard_normal(n)
    x3 = stream(seed, "x3").standard_normal(n)
    return {"x1": x1, "x2": x2, "x3": x3, "y": x1 + x2, "z": x1}


def test_sobol_additive():
    t = additive_table(100_000, 1)
    s1, s2, s3 = (sobol_first_order(t, x, "y") for x in ("x1", "x2", "x3"))
    assert s1 == pytest.approx(0.5, abs=0.05)
    assert s2 == pytest.approx(0.5, abs=0.05)
    assert s1 + s2 == pytest.approx(1.0, abs=0.05)
    assert s3 == pytest.approx(0.0, abs=0.05)
    assert sobol_first_order(t, "x1", "z") == pytest.approx(1.0, abs=0.02)


def test_sobol_weighted_additive():
    t = additive_table(100_000, 2)
    t["w"] = 2 * t["x1"] + t["x2"]
    assert sobol_first_order(t, "x1", "w") == pytest.approx(0.8, abs=0.05)


def test_sobol_errors():
    t = additive_table(999, 3)
    with pytest.raises(ValidationError):
        sobol_first_order(t, "x1", "y")
    t = additive_table(2000, 3)
    t["c"] = np.ones(2000)
    with pytest.raises(ValidationError):
        sobol_first_order(t, "x1", "c")
    with pytest.raises(ValidationError):
        sobol_first_order(t, "nope", "y")


def test_local_sensitivity():
    assert local_sensitivity(lambda x: x[0] ** 2, [3.0], 1e-4)[0] == pytest.approx(6.0, abs=1e-6)
    assert local_sensitivity(lambda x: 7.0, [1.0, 2.0], 1e-3).tolist() == [0.0, 0.0]
    for h in (1e-6, 0.1, 3.0):
        assert local_sensitivity(lambda x: 5 * x[0], [1.3], h)[0] == pytest.approx(5.0, rel=1e-9)
    g = local_sensitivity(lambda x: x[0] * x[1], [2.0, 3.0], 1e-3, sigmas=[0.5, 2.0])
    np.testing.assert_allclose(g, [1.5, 4.0])
    with pytest.raises(ValidationError):
        local_sensitivity(lambda x: math.log(x[0]), [0.0], 1e-3)
    with pytest.raises(ValidationError):
        local_sensitivity(lambda x: x[0], [0.0], 0.0)


def test_sa_views():
    t = {"a": np.array([3.0, 1.0, 2.0]), "y": np.array([0.2, 0.9, 0.5])}
    v = export_sa_views(t, "y")
    assert v.inputs == ("a",)
    assert v.scatter["a"].shape == (3, 2)
    assert v.shade.tolist() == [0.2, 0.5, 0.9]
    assert v.normalization == {"a": (1.0, 3.0), "y": (0.2, 0.9)}
    assert v.parallel.min() == 0.0 and v.parallel.max() == 1.0
    np.testing.assert_allclose(v.parallel[:, 0], [1.0, 0.5, 0.0])
    lines = v.parallel_csv().splitlines()
    assert lines[0] == "a,y,shade"
    assert len(v.scatter_csv("a").splitlines()) == 4
    const = export_sa_views({"a": np.ones(3), "y": np.array([0.1, 0.2, 0.3])}, "y")
    assert np.all(const.parallel[:, 0] == 0.0)
