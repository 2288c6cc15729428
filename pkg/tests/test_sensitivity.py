import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npsens.sensitivity import (
    DegenerateInferenceError,
    SensitivitySpec,
    causal_gap_bound,
    curve_for,
    grid,
    max_rejectable_delta,
    sens_test,
    verdict,
)


def upper_tail(t):
    return 0.5 * math.erfc(t / math.sqrt(2.0))


psi_st = st.floats(-0.5, 1.0)
se_st = st.floats(1e-4, 0.5)


def test_critical_values():
    assert SensitivitySpec(0.05, "two_sided").z == pytest.approx(1.959963984540054, abs=1e-12)
    assert SensitivitySpec(0.05, "one_sided_upper").z == pytest.approx(1.6448536269514722, abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [{"alpha": 0.0}, {"alpha": 0.7}, {"sidedness": "lower"}, {"delta_grid": (0.1, 0.05)}, {"delta_grid": (-0.1,)}],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SensitivitySpec(**kwargs)


@given(psi_st, se_st, st.floats(0.0, 1.0))
def test_p_value_matches_reference(psi, se, delta):
    pt = sens_test(psi, se, delta, SensitivitySpec())
    assert pt.p_value == pytest.approx(upper_tail((psi - delta) / se), abs=1e-12)


@given(psi_st, se_st, st.sampled_from(["two_sided", "one_sided_upper"]))
def test_frontier_separates_rejections(psi, se, side):
    spec = SensitivitySpec(0.05, side)
    frontier = max_rejectable_delta(psi, se, spec)
    assert frontier >= 0
    if frontier > 0:
        assert frontier == pytest.approx(psi - spec.z * se, abs=1e-15)
        below = frontier * (1 - 1e-9)
        assert sens_test(psi, se, below, spec).reject
    above = frontier + 1e-9 + 1e-9 * abs(frontier)
    assert not sens_test(psi, se, above, spec).reject


@given(psi_st, se_st)
def test_rejections_are_monotone_in_delta(psi, se):
    spec = SensitivitySpec(delta_grid=grid(0, 1, 0.05))
    flags = [p.reject for p in curve_for(psi, se, spec).points]
    # once a delta fails to reject, every larger delta fails too
    assert flags == sorted(flags, reverse=True)


def test_zero_se_is_degenerate():
    with pytest.raises(DegenerateInferenceError):
        sens_test(0.2, 0.0, 0.0, SensitivitySpec())
    with pytest.raises(DegenerateInferenceError):
        max_rejectable_delta(0.2, 0.0, SensitivitySpec())


def test_verdicts():
    assert verdict(0.12, SensitivitySpec(prespecified_max_delta=0.10)) == "robust"
    assert verdict(0.08, SensitivitySpec(prespecified_max_delta=0.10)) == "not robust"
    assert verdict(0.10, SensitivitySpec(prespecified_max_delta=0.10)) == "not robust"
    assert verdict(0.08, SensitivitySpec()) == "no prespecified ceiling"


def test_curve_serialization():
    spec = SensitivitySpec(delta_grid=(0.0, 0.1, 0.2), prespecified_max_delta=0.05)
    curve = curve_for(0.25, 0.07, spec)
    lines = curve.to_csv().splitlines()
    assert lines[0] == "delta0,t_stat,p_value,reject"
    assert len(lines) == 4
    d = curve.to_dict()
    assert d["verdict"]["conclusion"] == "robust"
    assert [p["delta0"] for p in d["points"]] == [0.0, 0.1, 0.2]


def test_gap_bound():
    g = causal_gap_bound(0.05, 0.19)
    assert g.centered == pytest.approx(0.14) and g.crude == 0.19
    assert causal_gap_bound(0.3, 0.19).centered == 0.0
    with pytest.raises(ValueError):
        causal_gap_bound(0.1, 1.5)


def test_grid_endpoints():
    g = grid(0, 0.3, 0.01)
    assert len(g) == 31 and g[0] == 0.0 and g[-1] == 0.3
    assert np.all(np.diff(g) > 0)


def test_worked_examples():
    spec = SensitivitySpec(0.05, "two_sided", grid(0, 0.5, 0.05))
    pt = sens_test(0.3, 0.05, 0.1, spec)
    assert pt.t_stat == pytest.approx(4.0, abs=1e-12) and pt.reject
    half = sens_test(0.3, 0.05, 0.3, spec)
    assert half.t_stat == 0.0 and half.p_value == 0.5 and not half.reject
    assert max_rejectable_delta(0.3, 0.05, spec) == pytest.approx(0.202002, abs=1e-6)
    curve = curve_for(0.3, 0.05, spec)
    flags = {round(p.delta0, 2): p.reject for p in curve.points}
    assert all(flags[d] for d in (0.0, 0.05, 0.1, 0.15, 0.2))
    assert not any(flags[d] for d in (0.25, 0.3, 0.5))
    assert max_rejectable_delta(0.05, 0.05, spec) == 0.0


def test_empty_grid_and_robust_small_ceiling():
    curve = curve_for(0.3, 0.05, SensitivitySpec(prespecified_max_delta=0.05))
    assert curve.points == ()
    assert curve.conclusion == "robust"


def test_gap_bound_examples():
    assert causal_gap_bound(1 / 28, 1 / 28).centered == 0.0
    assert causal_gap_bound(1 / 28, 0.05).centered == pytest.approx(0.014286, abs=1e-6)
    assert causal_gap_bound(1 / 28, 0.19).crude == 0.19


@given(psi_st, se_st)
def test_p_value_increasing_in_delta(psi, se):
    spec = SensitivitySpec()
    ps = [sens_test(psi, se, d, spec).p_value for d in (0.0, 0.05, 0.1, 0.2)]
    assert ps == sorted(ps)


@given(psi_st, se_st, st.floats(0.01, 0.2), st.floats(0.01, 0.2))
def test_frontier_monotone_in_alpha(psi, se, a1, a2):
    lo, hi = sorted((a1, a2))
    assert max_rejectable_delta(psi, se, SensitivitySpec(lo)) <= max_rejectable_delta(psi, se, SensitivitySpec(hi))


@given(psi_st, se_st)
def test_reject_iff_below_frontier(psi, se):
    spec = SensitivitySpec(delta_grid=grid(0, 1, 0.01))
    frontier = max_rejectable_delta(psi, se, spec)
    for p in curve_for(psi, se, spec).points:
        # away from floating-point ties at the frontier itself
        if abs(p.delta0 - frontier) > 1e-12:
            assert p.reject == (p.delta0 < frontier)
