"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from terrace_lab import cli, fronts, odeperiodic, pde, supersub, terrace
from terrace_lab import nonlinearity as nl

pytestmark = pytest.mark.slow

RUN1 = {"xmin": -150.0, "xmax": 250.0, "dx": 0.05, "dt": 0.005, "t_end": 200.0}
RUN3 = {"xmin": -80.0, "xmax": 200.0, "dx": 0.05, "dt": 0.005, "t_end": 200.0}
QUINTIC = {"theta1": 0.05, "q": 0.5, "theta2": 0.75, "kappa": 5.0}


def bistable_speed_oracle(a):
    return (1.0 - 2.0 * a) / math.sqrt(2.0)


# -- shared runs ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def run1():
    spec = nl.bistable(0.25)
    t0 = time.perf_counter()
    ter = terrace.extract_terrace(spec, RUN1)
    return spec, ter, time.perf_counter() - t0


@pytest.fixture(scope="module")
def run3():
    spec = nl.quintic(**QUINTIC)
    return spec, terrace.extract_terrace(spec, RUN3)


# -- criteria ---------------------------------------------------------------------------

def test_oracle_bistable_speed():
    assert bistable_speed_oracle(0.25) == pytest.approx(0.353553, abs=5e-7)
    assert bistable_speed_oracle(0.5) == 0.0


def test_c01_bistable_speed(run1, record_criterion):
    spec, ter, seconds = run1
    c = ter.speeds[0]
    oracle = bistable_speed_oracle(0.25)
    err = abs(c - oracle) / oracle
    # dx/2 refinement on a shorter domain, same dt
    g = pde.Grid.from_spacing(-50.0, 150.0, RUN1["dx"] / 2)
    fine = pde.simulate(spec, g, pde.heaviside_ic(g, 0.0, 1.0), dt=RUN1["dt"], t_end=RUN1["t_end"],
                        snapshot_stride=200)
    c_fine = fronts.estimate_speed(fronts.track_levels(fine, [0.5], method="quintic")[0], 1.0).c
    refine_err = abs(c - c_fine) / oracle
    ok = ter.N == 1 and err <= 0.01 and refine_err <= 0.01 and seconds <= 120.0
    assert record_criterion(1, "bistable speed", ok,
                            f"c={c:.6f} rel.err={err:.2e} (<=1e-2), dx/2 rel.diff={refine_err:.2e}, "
                            f"{seconds:.1f}s (<=120s)")


def test_c02_balanced_bistable(record_criterion):
    spec = nl.bistable(0.5)
    ter = terrace.extract_terrace(spec, dict(RUN1, t_end=100.0))
    c = ter.speeds[0]
    rep = terrace.check_terrace_structure(ter)
    zero_clauses = [cl for cl in rep.clauses if cl.wave == 1]
    ok = abs(c) < 5e-3 and len(zero_clauses) == 2 and rep.passed
    assert record_criterion(2, "balanced bistable", ok,
                            f"|c|={abs(c):.2e} (<5e-3), zero-speed clauses "
                            f"{sum(cl.passed for cl in zero_clauses)}/2 passed")


def test_c03_terrace_extraction(run3, record_criterion):
    spec, ter = run3
    oracles = []
    for upper, lower in ((1.0, 0.5), (0.5, 0.0)):
        tr = terrace.run_heaviside(spec, dict(terrace.default_sim_params(spec), **RUN3), upper, lower)
        track = fronts.track_levels(tr, [0.5 * (upper + lower)], method="quintic")[0]
        oracles.append(fronts.estimate_speed(track, spec.period_T).c)
    platforms = [p.q0 for p in ter.platforms]
    plat_err = max(abs(a - b) for a, b in zip(platforms, (1.0, 0.5, 0.0))) if ter.N == 2 else math.inf
    errs = [abs(c - o) / abs(o) for c, o in zip(ter.speeds, oracles)]
    ok = (oracles[0] < oracles[1] and ter.N == 2 and plat_err <= 1e-4
          and all(e <= 0.02 for e in errs))
    assert record_criterion(3, "terrace extraction", ok,
                            f"N={ter.N}, oracles c1={oracles[0]:.4f} < c2={oracles[1]:.4f}, "
                            f"platform err={plat_err:.1e} (<=1e-4), speed rel.errs="
                            f"{', '.join(f'{e:.1e}' for e in errs)} (<=2e-2)")


def test_c04_convergence(run3, record_criterion):
    spec, ter = run3
    shifts = terrace.fit_shift_functions(ter.trajectory, ter)
    t, r = terrace.residual_series(ter.trajectory, ter, shifts)
    tail = r[-max(2, math.ceil(0.25 * len(r))):]
    rise = float(np.max(np.diff(tail)))
    ok = r[-1] < 5e-3 and rise <= 0
    assert record_criterion(4, "convergence to the terrace", ok,
                            f"final residual={r[-1]:.2e} (<5e-3), max tail increment={rise:.1e} (<=0)")


def test_c05_zero_number(record_criterion):
    spec = nl.periodic_product("bistable-cubic", rho=0.5, a=0.3)
    res = fronts.zero_number_suite(spec, 50, seed=0)
    ok = res.n == 50 and res.passed
    assert record_criterion(5, "zero-number suite", ok,
                            f"{res.n} pairs, {len(res.violations)} violations")


def test_c06_steepness(record_criterion):
    res = fronts.steepness_suite(nl.bistable(0.3), 25, seed=0)
    ok = res.n == 25 and res.passed
    assert record_criterion(6, "steepness preservation", ok,
                            f"{res.n} pairs, {len(res.violations)} violations")


def test_c07_exponential_rate(record_criterion):
    cfg = cli.scenario_config("exponential-rate")
    spec = cfg.spec
    assert spec.params["rho"] == 0.5 and spec.params["a"] == 0.3 and spec.period_T == 1.0
    ter = terrace.extract_terrace(spec, cli.terrace_params(cfg))
    traj = cli.run_main(cfg)
    shifts = terrace.fit_shift_functions(traj, ter)
    limits = all(s.eta_bar is not None for s in shifts)
    t, r = terrace.residual_series(traj, ter, shifts, use_limit=True)
    fit = terrace.exponential_rate(t, r, r2_min=0.95)
    g = traj.grid
    stride = pde._steps_per_period(spec.period_T, traj.dt)
    bounds = [pde.simulate(spec, g, pde.heaviside_ic(g, a, 1.0), traj.bc, traj.dt,
                           traj.snapshots[-1].t, snapshot_stride=stride) for a in (10.0, -10.0)]
    sw = supersub.sandwich_fit(traj, *bounds)
    ok = limits and fit.nu > 0 and fit.r2 >= 0.95 and not sw.failed and sw.beta0_hat > 0
    assert record_criterion(7, "exponential rate", ok,
                            f"nu={fit.nu:.3f} (>0), r2={fit.r2:.4f} (>=0.95), "
                            f"beta0={sw.beta0_hat:.3f} (>0)")


def test_c08_certification(run1, record_criterion):
    spec, ter, _ = run1
    w = ter.waves[0]
    tol = supersub.cert_tol(spec)
    g = pde.Grid.from_spacing(-50.0, 60.0, w.dx)
    times = np.linspace(0.05, 5.0, 21)
    eps0, cert = supersub.find_eps0(w, w.c + 0.1, spec, g, times, K=-1.5, tol=tol)
    cfg = cli.scenario_config("certification")
    traj = cli.run_main(cfg)
    horizon = 20.0
    W = supersub.flattening_super(traj.snapshots[0], spec, horizon=horizon)
    flat = supersub.check_comparison(W, spec, traj.grid, np.linspace(0.05, horizon, 41), tol=tol)
    dom, worst = supersub.dominates(W, traj)
    ok = eps0 >= 1e-4 and cert.certified and flat.certified and dom
    assert record_criterion(8, "super-solution certification", ok,
                            f"eps0={eps0:.4g} (>=1e-4, certified={cert.certified}), flattening "
                            f"min residual={flat.min_residual:.1e} (>=-{tol:.1e}), "
                            f"max(u-W)={worst:.1e} (<=0)")


def test_c09_stability_oracle(record_criterion):
    specs = cli.catalog_specs()
    n = agree = 0
    worst = 0.0
    for spec in specs:
        k, a, w = cli.floquet_agreement(spec)
        n, agree, worst = n + k, agree + a, max(worst, w)
    ok = len(specs) == 10 and n > 0 and agree == n and worst <= 1e-6
    assert record_criterion(9, "stability classification", ok,
                            f"{agree}/{n} fixed points agree over {len(specs)} specs, "
                            f"worst Floquet mismatch={worst:.1e} (<=1e-6)")


def test_c10_spreading_bracket(run3, record_criterion):
    spec, ter = run3
    traj = ter.trajectory
    br = fronts.spreading_bracket(traj)
    lo = br.c_lower - 3 * br.stderr_lower
    hi = br.c_upper + 3 * br.stderr_upper
    levels = [0.1, 0.25, 0.4, 0.6, 0.75, 0.9]
    speeds = [fronts.estimate_speed(tr, spec.period_T).c
              for tr in fronts.track_levels(traj, levels, method="quintic")]
    ok = all(lo <= c <= hi for c in speeds)
    assert record_criterion(10, "spreading bracket", ok,
                            f"level speeds [{min(speeds):.4f}, {max(speeds):.4f}] inside "
                            f"[{lo:.4f}, {hi:.4f}]")


def test_c11_negative_control(tmp_path, record_criterion):
    cfg = cli.scenario_config("kpp-negative-control")
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.cmd_verify(cfg, tmp_path)
    text = buf.getvalue()
    ok = "hypotheses unmet" in text and "PASS" not in text and code == 0
    assert record_criterion(11, "negative control", ok,
                            f"cmd_verify exit {code}, reported: {text.strip().splitlines()[0]}")
