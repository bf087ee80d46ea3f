import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from terrace_lab import fronts, pde
from terrace_lab import nonlinearity as nl
from terrace_lab.nonlinearity import NonlinearitySpec


def _field(x, v):
    g = pde.Grid(float(x[0]), float(x[-1]), len(x))
    return pde.Field(g, 0.0, v)


def test_heaviside_crossing_brackets_jump(small_grid):
    f = pde.heaviside_ic(small_grid, 0.0, 1.0)
    a = fronts.level_crossing(f, 0.5)
    assert abs(a - 0.0) <= small_grid.dx / 2 + 1e-12


def test_ramp_crossing():
    x = np.linspace(-1, 2, 31)
    v = np.clip(1 - x, 0, 1)
    assert fronts.level_crossing(v, 0.25, x=x) == pytest.approx(0.75)


def test_unique_rejects_bump():
    x = np.linspace(-5, 5, 101)
    v = np.exp(-x**2)
    with pytest.raises(fronts.AmbiguityError):
        fronts.level_crossing(v, 0.5, "unique", x=x)
    assert fronts.level_crossing(v, 0.5, "leftmost", x=x) < 0 < fronts.level_crossing(v, 0.5, x=x)


def test_level_out_of_range():
    x = np.linspace(0, 1, 20)
    with pytest.raises(fronts.LevelRangeError):
        fronts.level_crossing(np.full(20, 0.3), 0.5, x=x)


@pytest.mark.parametrize("method", ["cubic", "quintic"])
def test_spline_crossing_is_sharper(method):
    x = np.linspace(-10, 10, 101)
    v = 1 / (1 + np.exp(x / np.sqrt(2)))
    alpha = 0.3
    exact = np.sqrt(2) * np.log(1 / alpha - 1)
    lin = abs(fronts.level_crossing(v, alpha, x=x) - exact)
    ref = abs(fronts.level_crossing(v, alpha, x=x, method=method) - exact)
    assert ref < lin / 10


@given(c=st.floats(-3, 3), a0=st.floats(-10, 10))
def test_perfect_line_speed(c, a0):
    k = np.arange(40)
    est = fronts.estimate_speed(fronts.LevelTrack(0.5, k, a0 + c * k * 1.0), 1.0)
    assert est.c == pytest.approx(c, abs=1e-10)
    assert est.stderr < 1e-9


def test_short_track_rejected():
    k = np.arange(8)
    with pytest.raises(fronts.InsufficientDataError):
        fronts.estimate_speed(fronts.LevelTrack(0.5, k, 2.0 * k), 1.0)


def test_bistable_speed(bistable_run):
    tr = fronts.track_levels(bistable_run, [0.5])[0]
    est = fronts.estimate_speed(tr, 1.0)
    assert est.c == pytest.approx(0.5 / np.sqrt(2), rel=5e-3)
    assert np.allclose(tr.increments[-20:], est.c, rtol=1e-3)


def test_heat_level_is_still():
    g = pde.Grid.from_spacing(-60, 60, 0.2)
    tr = pde.simulate(NonlinearitySpec.zero(), g, pde.heaviside_ic(g, 0.1, 1.0), dt=0.02, t_end=30)
    track = fronts.track_levels(tr, [0.5])[0]
    assert np.ptp(track.a) < 1e-9


def test_two_front_tracks_separate(quintic_run):
    hi, lo = fronts.track_levels(quintic_run, [0.75, 0.25], method="quintic")
    c_hi = fronts.estimate_speed(hi, 1.0).c
    c_lo = fronts.estimate_speed(lo, 1.0).c
    assert c_hi < c_lo
    gap = lo.a - hi.a[: len(lo.a)]
    assert np.all(np.diff(gap[20:]) > 0)


def test_truncated_track():
    # a sub-threshold box decays, so the level disappears mid-run
    g = pde.Grid.from_spacing(-20, 20, 0.1)
    box = np.where(np.abs(g.x) <= 0.5, 1.0, 0.0)
    tr = pde.simulate(nl.bistable(0.25), g, pde.Field(g, 0.0, box), dt=0.01, t_end=20)
    track = fronts.track_levels(tr, [0.5])[0]
    assert track.truncated and 0 < len(track.a) < 20


@pytest.mark.parametrize("samples, eps, want", [
    ([1, -1, 2, -3], 0.0, 3),
    ([0, 0, 0], 0.0, -1),
    ([1, 1e-15, -1], 1e-12, 1),
    ([2, 1, 0.5], 0.0, 0),
])
def test_sign_changes(samples, eps, want):
    assert fronts.sign_changes(samples, eps) == want


@given(st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=1, max_size=50))
def test_sign_changes_bounds(v):
    z = fronts.sign_changes(v, 1e-12)
    nonzero = sum(abs(x) > 1e-12 for x in v)
    assert z == -1 if nonzero == 0 else 0 <= z <= nonzero - 1


def test_zero_number_identical(bistable_run):
    z = fronts.zero_number_series(bistable_run, bistable_run)
    assert np.all(z.z == -1)


def test_ordered_runs_do_not_cross():
    g = pde.Grid.from_spacing(-30, 50, 0.1)
    spec = nl.bistable(0.3)
    t1 = pde.simulate(spec, g, pde.heaviside_ic(g, 0, 1), dt=0.01, t_end=10)
    t2 = pde.simulate(spec, g, pde.heaviside_ic(g, 3, 1), dt=0.01, t_end=10)
    z = fronts.zero_number_series(t1, t2)
    assert set(z.z) <= {-1, 0}


def test_bump_run_zero_number_drops():
    g = pde.Grid.from_spacing(-30, 50, 0.1)
    spec = nl.bistable(0.3)
    t1 = pde.simulate(spec, g, pde.heaviside_ic(g, 0, 1), dt=0.01, t_end=15)
    bump = pde.sandwich_ic(g, -6, 6, 1.0, {"kind": "ramp-bump", "amplitude": 0.8, "center": 0.7,
                                           "width": 0.2})
    t2 = pde.simulate(spec, g, bump, dt=0.01, t_end=15)
    z = fronts.zero_number_series(t1, t2)
    assert z.non_increasing()
    assert z.z[0] >= 1


def test_shift_must_be_whole_cells(bistable_run):
    with pytest.raises(ValueError):
        fronts.zero_number_series(bistable_run, bistable_run, shift=0.03)


def test_suites_small():
    spec = nl.bistable(0.3)
    assert fronts.zero_number_suite(spec, 5, seed=7, t_end=4.0).passed
    res = fronts.steepness_suite(spec, 4, seed=7, t_end=4.0)
    assert res.passed and res.n == 4


def test_steepness_examples():
    x = np.linspace(-20, 20, 401)
    jump = np.where(x <= 0, 1.0, 0.0)
    smooth = 0.5 * (1 - np.tanh(x / 2))
    assert fronts.is_steeper(jump, smooth) == fronts.STEEPER
    assert fronts.is_steeper(smooth, jump) == fronts.LESS_STEEP
    shifted = np.concatenate([np.ones(7), smooth[:-7]])
    assert fronts.is_steeper(shifted, smooth) == fronts.MUTUALLY
    hi = 0.6 + 0.4 * smooth
    lo = 0.4 * smooth
    assert fronts.is_steeper(hi, lo) == fronts.MUTUALLY


def test_steepness_rejects_non_monotone():
    with pytest.raises(ValueError):
        fronts.is_steeper(np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.5, 0.0]))


@given(w1=st.floats(0.5, 3), ratio=st.floats(1.5, 5))
def test_steeper_ramp(w1, ratio):
    x = np.linspace(-30, 30, 601)
    r1 = np.clip(0.5 - x / w1, 0, 1)
    r2 = np.clip(0.5 - x / (w1 * ratio), 0, 1)
    assert fronts.is_steeper(r1, r2) == fronts.STEEPER


def test_limit_profile_wave(bistable_run):
    lp = fronts.limit_profile(bistable_run, 0.5)
    assert lp.verdict == "wave"
    exact = 1 / (1 + np.exp(lp.xi / np.sqrt(2)))
    assert np.max(np.abs(lp.profile[0] - exact)) < 2e-3
    assert lp.convergence_defect < fronts.PROFILE_TOL


def test_limit_profile_platform(quintic_run):
    # the plateau is still tilted at this horizon, so use a loose flatness band
    lp = fronts.limit_profile(quintic_run, 0.5, window=10.0, flat_tol=0.01)
    assert lp.verdict == "platform"
    assert fronts.limit_profile(quintic_run, 0.75, window=10.0).verdict == "wave"


def test_limit_profile_heat_undecided():
    g = pde.Grid.from_spacing(-60, 60, 0.2)
    tr = pde.simulate(NonlinearitySpec.zero(), g, pde.heaviside_ic(g, 0.1, 1.0), dt=0.02, t_end=40)
    assert fronts.limit_profile(tr, 0.5).verdict == "undecided"


def test_bracket_single_front(bistable_run):
    br = fronts.spreading_bracket(bistable_run)
    c = 0.5 / np.sqrt(2)
    assert br.c_lower == pytest.approx(c, rel=1e-2) and br.c_upper == pytest.approx(c, rel=1e-2)


def test_bracket_terrace(quintic_run):
    br = fronts.spreading_bracket(quintic_run)
    hi, lo = fronts.track_levels(quintic_run, [0.75, 0.25], method="quintic")
    assert br.c_lower == pytest.approx(fronts.estimate_speed(hi, 1.0).c, rel=2e-2)
    assert br.c_upper == pytest.approx(fronts.estimate_speed(lo, 1.0).c, rel=2e-2)


def test_bracket_heat_is_slow():
    g = pde.Grid.from_spacing(-120, 120, 0.2)
    heat = NonlinearitySpec.zero()
    brackets = []
    for t_end in (100, 400):
        tr = pde.simulate(heat, g, pde.heaviside_ic(g, 0.1, 1.0), dt=0.05, t_end=t_end)
        brackets.append(fronts.spreading_bracket(tr))
    assert brackets[1].c_upper < brackets[0].c_upper < 0.25
    assert brackets[0].c_lower == pytest.approx(-brackets[0].c_upper, abs=1e-2)


def test_track_csv(tmp_path, bistable_run):
    tr = fronts.track_levels(bistable_run, [0.5])[0]
    tr.to_csv(tmp_path / "t.csv")
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], tr.a)
