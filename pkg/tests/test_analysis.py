from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densepos.analysis import (
    NePoint,
    SampleStats,
    UtilityParams,
    deviation_utility,
    empirical_ne_validation,
    exact,
    honest_utility,
    malicious_utilities,
    measure_ne_point,
    nash_boundary_check,
    ne_scenario,
    slashing_breakdown,
    slashing_utility,
)

import oracles


def test_exact_reads_float_repr():
    assert exact(0.9) == Fraction(9, 10)
    assert exact("0.025") == Fraction(1, 40)
    with pytest.raises(TypeError):
        exact(True)


def test_closed_form_utilities():
    p = UtilityParams(phi_h="0.7", phi_m="0.3", r=3)
    assert honest_utility(p) == Fraction(21, 10)
    assert malicious_utilities(p) == (0, Fraction(54, 100), Fraction(9, 10))


def test_utility_params_validation():
    with pytest.raises(ValueError):
        UtilityParams(phi_h="0.6", phi_m="0.6")
    with pytest.raises(ValueError):
        UtilityParams(phi_h=-1)
    with pytest.raises(ValueError):
        UtilityParams(beta=0)
    with pytest.raises(ValueError):
        UtilityParams(stake=-1)


@given(st.fractions(min_value=0, max_value=1), st.integers(min_value=1, max_value=40))
def test_deviation_matches_power_formula(phi, n):
    assert deviation_utility(phi, n) == phi**n * n
    if n == 2:
        assert deviation_utility(phi, 2) == malicious_utilities(UtilityParams.for_malicious(phi))[1]


def test_deviation_rejects_zero_blocks():
    with pytest.raises(ValueError):
        deviation_utility("0.5", 0)


def test_boundary_signs():
    verdicts = nash_boundary_check(["0.3", "0.5", "0.7", 1, 0])
    assert [v.sign for v in verdicts] == [1, 0, -1, 0, 1]
    assert [v.honest_dominates for v in verdicts] == [False, True, True, True, False]
    assert verdicts[1].on_boundary and not verdicts[2].on_boundary


def test_boundary_best_deviation():
    # phi^n * n peaks at n = 1 or 2 for phi = 0.5 (equal), longer for large phi
    half = nash_boundary_check(["0.5"])[0]
    assert half.best_deviation_blocks in (1, 2) and half.best_deviation_utility == 0.5
    strong = nash_boundary_check(["0.1"], horizon=100)[0]
    assert strong.best_deviation_blocks == 9  # argmax of 0.9^n * n
    assert nash_boundary_check([1])[0].best_deviation_utility == 0.0
    with pytest.raises(ValueError):
        nash_boundary_check(["1.5"])
    with pytest.raises(ValueError):
        nash_boundary_check(["0.5"], horizon=0)


def test_slashing_worked_example():
    p = UtilityParams(beta="0.9", r=1, r_max=10, stake=100)
    assert slashing_utility(p) == -200
    b = slashing_breakdown(p)
    assert (b.future, b.slashed) == (110, 210)


def test_slashing_requires_discounting():
    with pytest.raises(ValueError):
        slashing_utility(UtilityParams(beta=1))


positive = st.fractions(min_value=0, max_value=10**6)


@settings(max_examples=300)
@given(st.fractions(min_value=Fraction(1, 10**6), max_value=Fraction(999_999, 10**6)), positive, positive, positive)
def test_slashing_never_pays(beta, r, r_max, stake):
    p = UtilityParams(beta=beta, r=r, r_max=r_max, stake=stake)
    u = slashing_utility(p)
    assert u == oracles.slashing(p.r, p.r_max, p.beta, p.stake)
    assert u < 0 or (r == 0 and stake == 0 and u <= 0)


# -- empirical validation logic (no simulation) -------------------------------------------


def point(phi, honest, private, se=0.001, **kw):
    return NePoint(Fraction(phi), SampleStats(1000, honest, se), SampleStats(1000, private, se), **kw)


def test_sample_stats():
    s = SampleStats.of([1.0, 0.0] * 50, 1.0)
    assert s.mean == 0.5 and not s.widened
    assert s.se == pytest.approx((0.25 * 100 / 99 / 100) ** 0.5)
    small = SampleStats.of([1.0, 1.0], 2.0)
    assert small.widened and small.se == pytest.approx(1 / 2**0.5)
    assert SampleStats.of([], 2.0).widened
    b = SampleStats.bernoulli(3, 10, 2.0)
    assert b.mean == pytest.approx(0.6)


def test_validation_confirms_matching_orders():
    report = empirical_ne_validation([point("0.3", 0.3, 0.18), point("0.6", 0.6, 0.72)])
    assert report.ok
    assert [p.confirmed for p in report.points] == [True, True]
    assert all(p.honest_consistent and p.private_consistent for p in report.points)
    assert "confirmed" in report.table()


def test_validation_flags_contradiction():
    report = empirical_ne_validation([point("0.3", 0.3, 0.5)])
    assert not report.ok
    assert report.points[0].contradiction
    assert "CONTRADICTS" in report.table()


def test_validation_leaves_noisy_points_unresolved():
    report = empirical_ne_validation([point("0.45", 0.45, 0.405, se=0.05)])
    assert report.ok and not report.points[0].confirmed


def test_ungated_points_do_not_fail_the_report():
    report = empirical_ne_validation([point("0.3", 0.3, 0.5, delta=5)])
    assert report.ok and report.points[0].contradiction
    assert "ungated" in report.table()


def test_boundary_point_is_never_confirmed():
    report = empirical_ne_validation([point("0.5", 0.5, 0.5)])
    assert report.points[0].analytic_order == 0 and not report.points[0].confirmed


# -- simulation-backed ---------------------------------------------------------------


def test_ne_scenario_shape():
    sc = ne_scenario("0.3", slots=100)
    pools = {a.id: a for a in sc.agents}
    assert pools["m"].strategy == "private_fork"
    assert pools["m"].pledge * 7 == pools["h"].pledge * 3
    assert ne_scenario("0.3", slots=100, private=False).agents[1].strategy == "honest"
    assert len(ne_scenario(0, slots=100).agents) == 1


def test_degenerate_share_has_no_attempts():
    pt = measure_ne_point(0, seeds=[0], slots=2_000)
    assert pt.honest.mean == 0
    assert pt.private.n == 0 and pt.private.widened


def test_small_share_point_matches_closed_forms():
    # a slow block rate keeps same-slot collisions, which cost the attacker, rare
    pt = measure_ne_point("0.2", seeds=[0, 1], slots=60_000, t_target=60)
    report = empirical_ne_validation([pt])
    p = report.points[0]
    assert p.honest_consistent and p.private_consistent
    assert p.confirmed
