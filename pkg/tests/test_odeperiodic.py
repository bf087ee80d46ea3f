import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from terrace_lab import nonlinearity as nl
from terrace_lab import odeperiodic as op
from terrace_lab.nonlinearity import NonlinearitySpec


def test_poincare_identity_flow():
    assert op.poincare_map(NonlinearitySpec.zero(), 0.7) == pytest.approx(0.7, abs=1e-14)


def test_poincare_kpp_closed_form():
    assert op.poincare_map(nl.kpp(), 0.0) == 0.0
    want = 0.5 * math.e / (0.5 * math.e + 0.5)
    assert op.poincare_map(nl.kpp(), 0.5) == pytest.approx(want, rel=1e-9)


@given(h=st.floats(0.01, 0.99))
def test_poincare_map_monotone(h):
    # the time-T map of a scalar ODE is increasing
    spec = nl.periodic_product("bistable-cubic", rho=0.5, a=0.3)
    assert op.poincare_map(spec, h + 1e-3) > op.poincare_map(spec, h)


def test_divergence_raises():
    spec = NonlinearitySpec("custom-polynomial", {"c2_0": 1.0})
    with pytest.raises(op.DivergenceError):
        op.poincare_map(spec, 5.0)


def _q0(sols):
    return [round(s.q0, 8) for s in sols]


@pytest.mark.parametrize("spec, interval, want", [
    (nl.kpp(), (0, 1.5), [0.0, 1.0]),
    (nl.quintic(0.2, 0.5, 0.8), (0, 1), [0.0, 0.2, 0.5, 0.8, 1.0]),
    (nl.bistable(0.3), (0, 1), [0.0, 0.3, 1.0]),
])
def test_find_point_solutions(spec, interval, want):
    sols = op.find_periodic_solutions(spec, interval)
    assert _q0(sols) == pytest.approx(want, abs=1e-8)
    assert all(s.kind == "point" for s in sols)


def test_combustion_plateau():
    sols = op.find_periodic_solutions(nl.combustion(0.3), (0, 1))
    assert [s.kind for s in sols] == ["interval", "point"]
    lo, hi = sols[0].band
    assert lo == pytest.approx(0.0, abs=1e-8)
    assert hi == pytest.approx(0.3, abs=1e-6)
    assert sols[1].q0 == pytest.approx(1.0)


def test_periodic_solution_closes_and_solves():
    spec = nl.periodic_product("bistable-cubic", rho=0.5, a=0.3)
    mid = [s for s in op.find_periodic_solutions(spec, (0, 1)) if 0.1 < s.q0 < 0.9][0]
    assert abs(mid.q[0] - mid.q[-1]) < 1e-8
    spl = CubicSpline(mid.t, mid.q)
    resid = spl(mid.t[5:-5], 1) - spec.eval(mid.t[5:-5], mid.q[5:-5])
    assert np.max(np.abs(resid)) < 1e-6


def test_nonconstant_periodic_solution():
    # u(1-u)(u - a(t)) with a(t) = 0.5 + 0.2 sin: the middle solution moves with t
    spec = NonlinearitySpec("custom-polynomial", {"c3_0": -1.0, "c2_0": 1.5, "c2_1": 0.2,
                                                  "c1_0": -0.5, "c1_1": -0.2})
    sols = op.find_periodic_solutions(spec, (0, 1))
    assert len(sols) == 3
    mid = sols[1]
    assert np.ptp(mid.q) > 1e-3
    spl = CubicSpline(mid.t, mid.q, bc_type="periodic")
    assert np.max(np.abs(spl(mid.t, 1) - spec.eval(mid.t, mid.q))) < 1e-5
    assert op.classify_stability(spec, mid, sols).linearly_unstable


@pytest.mark.parametrize("spec, value, mu", [
    (nl.kpp(), 1.0, 1.0),
    (nl.kpp(), 0.0, -1.0),
    (nl.periodic_product("kpp", rho=0.5), 1.0, 1.0),
    (nl.bistable(0.25), 0.0, 0.25),
])
def test_floquet_examples(spec, value, mu):
    q = op.sample_periodic(spec, value)
    assert op.floquet_exponent(spec, q) == pytest.approx(mu, rel=1e-9)


@pytest.mark.parametrize("spec", [nl.quintic(), nl.periodic_product("bistable-cubic", rho=0.5, a=0.3),
                                  nl.periodic_product("multistable-quintic", rho=0.3)],
                         ids=["quintic", "product-bistable", "product-quintic"])
def test_floquet_matches_poincare_derivative(spec):
    sols = op.find_periodic_solutions(spec, (0, 1))
    for s in sols:
        rec = op.classify_stability(spec, s, sols)
        assert rec.floquet == pytest.approx(rec.floquet_map, rel=1e-6)
        assert (rec.floquet < 1) == (rec.mu > 0)
        if rec.linearly_stable:
            assert rec.stable_above and rec.stable_below


def test_quintic_alternates():
    spec = nl.quintic()
    sols = op.find_periodic_solutions(spec, (0, 1))
    signs = [op.classify_stability(spec, s).mu > 0 for s in sols]
    # oracle: -f'(root) > 0 exactly at the outer and middle roots
    roots = np.array([0.0, 0.2, 0.5, 0.8, 1.0])
    deriv = np.polyder(np.poly1d(roots, r=True) * -1.0)
    assert signs == list(-deriv(roots) > 0) == [True, False, True, False, True]


def test_plateau_stability_is_degenerate():
    spec = nl.combustion(0.3)
    sols = op.find_periodic_solutions(spec, (0, 1))
    rec = op.classify_stability(spec, sols[0], sols)
    assert rec.mu == 0.0
    assert not rec.linearly_stable and not rec.linearly_unstable
    top = op.classify_stability(spec, sols[1], sols)
    assert top.linearly_stable and top.isolated_below


@pytest.mark.parametrize("spec, value, side, lo, hi", [
    (nl.bistable(0.3), 1.0, "plus", 0.3, math.inf),
    (nl.bistable(0.3), 0.0, "minus", -math.inf, 0.3),
    (nl.kpp(), 1.0, "plus", 0.0, math.inf),
])
def test_attraction_interval(spec, value, side, lo, hi):
    q = op.sample_periodic(spec, value)
    ladder = op.find_periodic_solutions(spec, (0, 1))
    got = op.attraction_interval(spec, q, side, ladder=ladder)
    for want, have in ((lo, got.lo), (hi, got.hi)):
        if math.isinf(want):
            assert have == want
        else:
            assert have == pytest.approx(want, abs=1e-3)


def test_attraction_interval_needs_stability():
    with pytest.raises(ValueError):
        op.attraction_interval(nl.kpp(), op.sample_periodic(nl.kpp(), 0.0))


def test_solution_roundtrip():
    s = op.sample_periodic(nl.periodic_product("kpp", rho=0.5), 1.0)
    back = op.PeriodicSolution.from_dict(s.to_dict())
    assert np.array_equal(back.q, s.q) and back.period_T == s.period_T
    assert s(0.25 + 3.0) == pytest.approx(s(0.25))
