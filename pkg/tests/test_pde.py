import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from terrace_lab import _backend, pde
from terrace_lab import nonlinearity as nl
from terrace_lab import odeperiodic as op
from terrace_lab.nonlinearity import NonlinearitySpec

ZERO = NonlinearitySpec.zero()


def test_grid_spacing():
    g = pde.Grid.from_spacing(-150, 250, 0.05)
    assert g.n_x == 8001
    assert g.dx == pytest.approx(0.05)
    assert g.shifted(3).xmin == pytest.approx(-150 + 0.15)


def test_field_is_read_only(small_grid):
    f = pde.Field(small_grid, 0.0, np.zeros(small_grid.n_x))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        pde.Field(small_grid, 0.0, np.full(small_grid.n_x, np.nan))


def test_heaviside_halves(small_grid):
    f = pde.heaviside_ic(small_grid, 0.0, 1.0)
    x = small_grid.x
    assert np.all(f.values[x < -1e-9] == 1.0) and np.all(f.values[x > 1e-9] == 0.0)


def test_heaviside_degenerate_and_outside(small_grid):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = pde.heaviside_ic(small_grid, small_grid.xmax, 1.0)
    assert np.all(f.values == 1.0)
    with pytest.warns(pde.BoundaryWarning):
        pde.heaviside_ic(small_grid, small_grid.xmin - 1, 1.0)
    with pytest.raises(ValueError):
        pde.heaviside_ic(small_grid, small_grid.xmin - 1, 1.0, strict=True)


@pytest.mark.parametrize("shape", ["linear",
                                   {"kind": "ramp-bump", "amplitude": 0.4},
                                   {"kind": "random", "seed": 3, "n_modes": 5}])
def test_sandwich_bounds(small_grid, shape):
    f = pde.sandwich_ic(small_grid, -3.0, 3.0, 1.0, shape)
    x = small_grid.x
    assert np.all(f.values[x <= -3] == 1.0) and np.all(f.values[x >= 3] == 0.0)
    assert f.values.min() >= 0.0 and f.values.max() <= 1.0
    if shape == "linear":
        assert np.all(np.diff(f.values) <= 0)


def test_ramp_bump_is_not_monotone(small_grid):
    f = pde.sandwich_ic(small_grid, -3.0, 3.0, 1.0, {"kind": "ramp-bump", "amplitude": 0.4})
    assert np.any(np.diff(f.values) > 0)


def test_constant_stays_constant(small_grid):
    f = pde.Field(small_grid, 0.0, np.full(small_grid.n_x, 0.3))
    for bc in ("platform", "dirichlet", "neumann"):
        out = pde.step(f, ZERO, 0.01, pde.BoundaryPolicy(bc))
        assert np.array_equal(out.values, f.values)


def test_heat_mass_conserved():
    g = pde.Grid.from_spacing(-20, 20, 0.05)
    f = pde.Field(g, 0.0, np.exp(-g.x**2))
    bc = pde.BoundaryPolicy("dirichlet")
    mass0 = np.sum(f.values) * g.dx
    for _ in range(100):
        f = pde.step(f, ZERO, 0.01, bc)
    mass = np.sum(f.values) * g.dx
    assert mass == pytest.approx(mass0, abs=1e-10)


def test_kpp_constant_step_matches_ode():
    g = pde.Grid.from_spacing(-5, 5, 0.1)
    spec = nl.kpp()
    for dt in (0.02, 0.01):
        f = pde.step(pde.Field(g, 0.0, np.full(g.n_x, 0.5)), spec, dt)
        ref = op.integrate(spec, 0.5, dt, rtol=1e-12).y[0, -1]
        err = abs(f.values[10] - ref)
        assert err < 2 * dt**3
    assert np.ptp(f.values) == 0.0


def test_zero_stays_zero(small_grid):
    tr = pde.simulate(nl.bistable(0.3), small_grid, pde.Field(small_grid, 0.0, np.zeros(small_grid.n_x)),
                      t_end=3.0)
    assert all(np.all(s.values == 0.0) for s in tr.snapshots)


def test_homogeneous_data_follow_platform(small_grid):
    spec = nl.periodic_product("bistable-cubic", rho=0.5, a=0.3)
    h0 = 0.8
    tr = pde.simulate(spec, small_grid, pde.Field(small_grid, 0.0, np.full(small_grid.n_x, h0)),
                      dt=0.005, t_end=3.0, snapshot_stride=20)
    for s in tr.snapshots[1:]:
        ref = op.integrate(spec, h0, s.t, rtol=1e-12).y[0, -1]
        assert np.ptp(s.values) == 0.0
        assert s.values[0] == pytest.approx(ref, abs=1e-5)


def test_dt_must_divide_period(small_grid):
    with pytest.raises(ValueError):
        pde.simulate(nl.kpp(), small_grid, pde.heaviside_ic(small_grid, 0, 1), dt=0.003, t_end=1.0)


def test_blow_up_detected(small_grid):
    spec = NonlinearitySpec("custom-polynomial", {"c3_0": 1.0})
    ic = pde.Field(small_grid, 0.0, np.full(small_grid.n_x, 50.0))
    with pytest.raises(pde.BlowUpError):
        pde.simulate(spec, small_grid, ic, dt=0.01, t_end=5.0)


def test_snapshot_schedule(small_grid):
    tr = pde.simulate(nl.bistable(), small_grid, pde.heaviside_ic(small_grid, 0, 1), dt=0.01,
                      t_end=4.0, snapshot_stride=10, stride_from=3.0)
    assert [s.t for s in tr.period_snapshots] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert len(tr.last_period_phases()) == 10
    assert list(tr.period_indices) == [0, 1, 2, 3, 4]


@pytest.mark.skipif(len(_backend.BACKENDS) < 2, reason="compiled kernel not built")
@pytest.mark.parametrize("spec", [nl.kpp(), nl.bistable(0.3), nl.quintic(), nl.combustion(),
                                  nl.periodic_product("multistable-quintic", rho=0.4),
                                  NonlinearitySpec("custom-polynomial",
                                                   {"c1_1": 0.3, "c2_0": 1.0, "c3_0": -1.5, "c3_2": 0.3})],
                         ids=lambda s: s.family)
@pytest.mark.parametrize("bc", ["platform", "dirichlet", "neumann"])
def test_backends_agree(spec, bc, small_grid):
    ic = pde.sandwich_ic(small_grid, -3, 3, 1.0, {"kind": "random", "seed": 1})
    b = pde.BoundaryPolicy(bc)
    a = pde.simulate(spec, small_grid, ic, b, 0.01, 2.0, backend="compiled")
    p = pde.simulate(spec, small_grid, ic, b, 0.01, 2.0, backend="python")
    assert np.allclose(a.snapshots[-1].values, p.snapshots[-1].values, rtol=0, atol=1e-13)


@given(seed=st.integers(0, 10_000), shift=st.floats(0.05, 0.5))
def test_comparison_principle(seed, shift):
    """u0 <= v0 pointwise stays ordered under the discrete flow."""
    g = pde.Grid.from_spacing(-15, 15, 0.1)
    spec = nl.periodic_product("bistable-cubic", rho=0.5, a=0.3)
    u0 = pde.sandwich_ic(g, -4, 4, 1.0, {"kind": "random", "seed": seed})
    v0 = pde.Field(g, 0.0, np.minimum(u0.values + shift * np.exp(-g.x**2 / 8), 1.0))
    tu = pde.simulate(spec, g, u0, dt=0.01, t_end=2.0)
    tv = pde.simulate(spec, g, v0, dt=0.01, t_end=2.0)
    for a, b in zip(tu.snapshots, tv.snapshots):
        assert np.all(a.values <= b.values + 1e-14)


def test_monotone_dt():
    assert pde.monotone_dt(NonlinearitySpec.zero()) == np.inf
    assert pde.monotone_dt(nl.kpp()) == pytest.approx(0.5 / 1.2, rel=1e-2)


def test_columnar_roundtrip(tmp_path, small_grid):
    tr = pde.simulate(nl.bistable(), small_grid, pde.heaviside_ic(small_grid, 0, 1), t_end=2.0)
    path = tr.write_columnar(tmp_path / "run.trl")
    raw = path.read_bytes()
    assert raw[:4] == b"TRL1"
    back = pde.Trajectory.read_columnar(path, tr.spec)
    assert [s.t for s in back.snapshots] == [s.t for s in tr.snapshots]
    assert all(np.array_equal(a.values, b.values) for a, b in zip(back.snapshots, tr.snapshots))


def test_csv_export(tmp_path, small_grid):
    tr = pde.simulate(nl.bistable(), small_grid, pde.heaviside_ic(small_grid, 0, 1), t_end=1.0)
    files = tr.write_csv(tmp_path)
    assert len(files) == len(tr.snapshots) + 1
    data = np.loadtxt(files[1], delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], tr.snapshots[1].values)


def test_moving_window_keeps_front_inside():
    g = pde.Grid.from_spacing(-20, 20, 0.1)
    tr = pde.simulate(nl.bistable(0.25), g, pde.heaviside_ic(g, 0, 1), dt=0.01, t_end=60.0,
                      moving_window={"level": 0.5, "margin": 10.0})
    assert tr.meta["window_shift_cells"] > 0
    last = tr.snapshots[-1]
    assert last.grid.xmin > g.xmin
    assert last.values[-1] < 1e-3


@pytest.mark.skipif(len(_backend.BACKENDS) < 2, reason="compiled kernel not built")
@pytest.mark.parametrize("spec", [nl.kpp(), nl.bistable(0.3), nl.quintic(0.05, 0.5, 0.75, 5.0),
                                  nl.combustion(0.3), nl.periodic_product("combustion", rho=0.5),
                                  nl.periodic_product("kpp", rho=0.8, period_T=2.0),
                                  NonlinearitySpec("custom-polynomial", {"c1_1": 0.3, "c4_2": 2.0})],
                         ids=lambda s: s.family)
@given(t=st.floats(0, 4))
def test_compiled_reaction_matches_eval(spec, t):
    from terrace_lab import _kernels

    u = np.linspace(-0.2, 1.2, 57)
    code, params, rho = spec.kernel_args()
    got = np.array(_kernels.reaction_values(u, t, spec.period_T, code, params, rho))
    assert np.allclose(got, spec.eval(t, u), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("backend", _backend.BACKENDS)
def test_tail_has_no_subnormals(backend):
    g = pde.Grid.from_spacing(-20, 200, 0.05)
    tr = pde.simulate(nl.bistable(0.25), g, pde.heaviside_ic(g, 0.0, 1.0), dt=0.005, t_end=2.0,
                      backend=backend)
    v = tr.snapshots[-1].values
    assert not np.any((v != 0) & (np.abs(v) < np.finfo(float).tiny))
    assert v[-1] == 0.0 and v[len(v) // 4] > 0.0
