"""Propagating terraces: extraction from a Heaviside run, shift functions,
the stacked-wave residual and structural checks."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from . import fronts, odeperiodic, pde
from .odeperiodic import PeriodicSolution

log = logging.getLogger(__name__)

SPEED_ZERO_TOL = 5e-3
ANCHOR_TOL = 1e-6
TAIL_TOL = 1e-3
SNAP_TOL = 2e-2
N_PHASE = 20


class PartialTerraceError(RuntimeError):
    """The run budget ran out before the construction reached 0."""

    def __init__(self, message, progress):
        super().__init__(message)
        self.progress = progress


# -- wave profiles ------------------------------------------------------------------

@dataclass(eq=False)
class WaveProfile:
    """Period-resolved profile U~(t_j, xi) of a wave U(t, x) = U~(t, x - c t).

    ``upper`` and ``lower`` are the platforms on the left and right; beyond
    the stored xi-window the profile relaxes to them exponentially.
    """

    c: float
    period_T: float
    xi: np.ndarray
    t: np.ndarray
    profile: np.ndarray
    upper: PeriodicSolution
    lower: PeriodicSolution
    anchor: dict = field(default_factory=dict)
    stderr: float = 0.0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.profile = np.atleast_2d(np.asarray(self.profile, dtype=float))
        if self.profile.shape != (len(self.t), len(self.xi)):
            raise ValueError("profile must have shape (len(t), len(xi))")
        self._xi_splines = {}
        self._t_spline = None

    @property
    def dx(self):
        return float(self.xi[1] - self.xi[0])

    def row(self, t):
        """U~(t, .) on the stored xi-grid (periodic interpolation in t)."""
        s = float(np.mod(t, self.period_T))
        hit = np.flatnonzero(np.abs(self.t - s) < 1e-9 * self.period_T)
        if hit.size:
            return self.profile[hit[0]]
        if np.isclose(s, self.period_T, rtol=0, atol=1e-9 * self.period_T):
            return self.profile[0]
        if len(self.t) == 1:
            return self.profile[0]
        if self._t_spline is None:
            tt = np.append(self.t, self.t[0] + self.period_T)
            data = np.vstack([self.profile, self.profile[:1]])
            self._t_spline = CubicSpline(tt, data, axis=0, bc_type="periodic")
        return self._t_spline(s)

    def __call__(self, t, xi):
        """U~(t, xi) for scalar ``t`` and array ``xi``.

        Quintic spline inside the stored window; outside it the distance to
        the platform decays exponentially at the rate read off the last
        ``TAIL_FIT`` space units (constant platform value if no clean
        exponential tail is present).
        """
        s = float(np.mod(t, self.period_T))
        key = round(s / self.period_T * 1e9)
        cached = self._xi_splines.get(key)
        if cached is None:
            row = self.row(s)
            up, lo = self.upper(s), self.lower(s)
            cached = (make_interp_spline(self.xi, row, k=5), up, lo,
                      _tail_rate(self.xi, row, up, left=True),
                      _tail_rate(self.xi, row, lo, left=False))
            if len(self._xi_splines) > 64:
                self._xi_splines.clear()
            self._xi_splines[key] = cached
        spl, up, lo, lam_l, lam_r = cached
        xi = np.asarray(xi, dtype=float)
        out = spl(np.clip(xi, self.xi[0], self.xi[-1]))
        left, right = xi < self.xi[0], xi > self.xi[-1]
        if np.any(left):
            d0 = spl(self.xi[0]) - up
            out[left] = up + d0 * np.exp(lam_l * (xi[left] - self.xi[0]))
        if np.any(right):
            d0 = spl(self.xi[-1]) - lo
            out[right] = lo + d0 * np.exp(-lam_r * (xi[right] - self.xi[-1]))
        return out

    def check(self, anchor_tol=ANCHOR_TOL, tail_tol=TAIL_TOL, noise=1e-8):
        """Invariant report: monotone rows, anchor value, tail limits."""
        mono = bool(np.all(np.diff(self.profile, axis=1) <= noise))
        target = 0.5 * (self.upper.q0 + self.lower.q0)
        anchor_err = abs(float(self(0.0, np.array([0.0]))[0]) - target)
        up = np.array([self.upper(s) for s in self.t])
        lo = np.array([self.lower(s) for s in self.t])
        tail_err = float(max(np.max(np.abs(self.profile[:, 0] - up)),
                             np.max(np.abs(self.profile[:, -1] - lo))))
        return {"monotone": mono, "anchor_error": anchor_err, "anchor_ok": anchor_err <= anchor_tol,
                "tail_error": tail_err, "tail_ok": tail_err <= tail_tol}

    def shifted(self, delta):
        """The same wave translated right by ``delta`` (a multiple of dx)."""
        m = delta / self.dx
        if abs(m - round(m)) > 1e-9:
            raise ValueError("shift must be a whole number of cells")
        m = int(round(m))
        prof = np.roll(self.profile, m, axis=1)
        if m > 0:
            prof[:, :m] = prof[:, m:m + 1]
        elif m < 0:
            prof[:, m:] = prof[:, m - 1:m]
        return WaveProfile(self.c, self.period_T, self.xi, self.t, prof, self.upper, self.lower,
                           dict(self.anchor, shift=delta), self.stderr)

    def field_at(self, t=0.0):
        g = pde.Grid(float(self.xi[0]), float(self.xi[-1]), len(self.xi))
        return pde.Field(g, t, self.row(t))


TAIL_FIT = 2.0


def _tail_rate(xi, row, platform, left):
    """Exponential decay rate of |row - platform| towards the window edge (0 if none)."""
    n = max(2, int(round(TAIL_FIT / (xi[1] - xi[0]))))
    d = (row[:n + 1] - platform) if left else (row[-n - 1:] - platform)[::-1]
    if d[0] == 0 or d[-1] == 0 or np.sign(d[0]) != np.sign(d[-1]) or abs(d[0]) < 1e-14:
        return 0.0
    lam = math.log(abs(d[-1] / d[0])) / (n * (xi[1] - xi[0]))
    return lam if lam > 0 else 0.0


def wave_from_trajectory(traj, upper, lower, c, stderr=0.0, window=fronts.WINDOW):
    """Read a wave between ``upper`` and ``lower`` off the last stored period.

    Each phase snapshot u(KT + s, .) is recentred at a_K + c s, where a_K is
    the crossing of the mid level (upper(0) + lower(0)) / 2 at t = KT.
    """
    level = 0.5 * (upper.q0 + lower.q0)
    phases = traj.last_period_phases()
    base = phases[0]
    K_T = base.t
    a_K = fronts.level_crossing(base, level, "rightmost", method="quintic")
    dx = traj.grid.dx
    nh = int(round(window / dx))
    xi = np.arange(-nh, nh + 1) * dx
    rows = [fronts._recentre(s, a_K + c * (s.t - K_T), xi) for s in phases]
    t_ph = np.array([s.t - K_T for s in phases])
    anchor = {"level": level, "position": a_K, "time": K_T}
    return WaveProfile(c, traj.period_T, xi, t_ph, np.array(rows), upper, lower, anchor, stderr)


# -- terrace --------------------------------------------------------------------------

@dataclass(eq=False)
class Terrace:
    """Platforms p_0 > ... > p_N = 0 and the waves connecting them."""

    platforms: list
    waves: list
    stability: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    trajectory: object = None

    def __post_init__(self):
        if len(self.waves) != len(self.platforms) - 1:
            raise ValueError("need exactly one wave between consecutive platforms")
        q0 = [p.q0 for p in self.platforms]
        if any(b >= a for a, b in zip(q0, q0[1:])):
            raise ValueError("platforms must be strictly decreasing at t=0")

    @property
    def N(self):
        return len(self.waves)

    @property
    def speeds(self):
        return [w.c for w in self.waves]

    @property
    def stderrs(self):
        return [w.stderr for w in self.waves]

    def speeds_ordered(self):
        c, s = self.speeds, self.stderrs
        return all(c[i] <= c[i + 1] + 3 * (s[i] + s[i + 1]) for i in range(len(c) - 1))

    def to_dict(self, profile_refs=None):
        refs = profile_refs or [None] * self.N
        return {
            "platforms": [p.to_dict() for p in self.platforms],
            "waves": [{"c": w.c, "stderr": w.stderr, "anchor": w.anchor, "profile_ref": r}
                      for w, r in zip(self.waves, refs)],
            "diagnostics": _jsonable(self.diagnostics),
        }

    def write_json(self, path):
        """JSON document plus one TRL1 profile dump per wave next to it."""
        path = Path(path)
        refs = []
        for i, w in enumerate(self.waves, start=1):
            ref = path.with_name(f"{path.stem}_wave{i}.trl")
            pde.dump_columnar(ref, ((t, w.xi[0], w.dx, r) for t, r in zip(w.t, w.profile)),
                              len(w.xi))
            refs.append(ref.name)
        path.write_text(json.dumps(self.to_dict(refs), indent=2))
        return [path] + [path.with_name(r) for r in refs]


def read_terrace_json(path, spec):
    """Inverse of :meth:`Terrace.write_json` (stability records are not restored)."""
    path = Path(path)
    data = json.loads(path.read_text())
    platforms = [PeriodicSolution.from_dict(p) for p in data["platforms"]]
    waves = []
    for i, w in enumerate(data["waves"]):
        tr = pde.Trajectory.read_columnar(path.with_name(w["profile_ref"]), spec)
        g = tr.snapshots[0].grid
        xi = np.linspace(g.xmin, g.xmax, g.n_x)
        rows = np.array([s.values for s in tr.snapshots])
        t = np.array([s.t for s in tr.snapshots])
        waves.append(WaveProfile(w["c"], spec.period_T, xi, t, rows, platforms[i],
                                 platforms[i + 1], w["anchor"], w["stderr"]))
    return Terrace(platforms, waves, [], data.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _nearest(ladder, value, below):
    best, dist = None, math.inf
    for j, s in enumerate(ladder[:below]):
        lo, hi = s.band if s.kind == "interval" else (s.q0, s.q0)
        d = 0.0 if lo <= value <= hi else min(abs(value - lo), abs(value - hi))
        if d < dist:
            best, dist = j, d
    return best, dist


def default_sim_params(spec, p0=1.0):
    return {"xmin": -150.0, "xmax": 250.0, "dx": 0.05, "dt": spec.period_T / 200,
            "t_end": 200.0, "a": 0.0, "p0": p0, "n_phase": N_PHASE,
            "window": fronts.WINDOW, "bc": "platform", "backend": None,
            "refine_waves": True}


def run_heaviside(spec, params, upper=None, lower=0.0):
    """Run from ``lower + (upper - lower) H(a - x)``, storing the last period densely."""
    upper = params["p0"] if upper is None else upper
    g = pde.Grid.from_spacing(params["xmin"], params["xmax"], params["dx"])
    ic = pde.heaviside_ic(g, params.get("a", 0.0), upper - lower)
    if lower != 0.0:
        ic = pde.Field(g, 0.0, ic.values + lower)
    dt = params["dt"]
    n_per = pde._steps_per_period(spec.period_T, dt)
    n_phase = max(1, int(params.get("n_phase", N_PHASE)))
    stride = max(1, n_per // n_phase)
    t_end = params["t_end"]
    return pde.simulate(spec, g, ic, pde.BoundaryPolicy(params.get("bc", "platform")), dt, t_end,
                        snapshot_stride=stride, stride_from=t_end - spec.period_T,
                        backend=params.get("backend"), p_max=max(abs(upper), 1.0))


def extract_terrace(spec, sim_params=None, run_budget=8, ladder=None, traj=None,
                    snap_tol=SNAP_TOL):
    """Minimal terrace below the top platform ``sim_params["p0"]``.

    One Heaviside run is analysed top-down.  From the current platform the
    level alpha is seeded at the midpoint towards the next periodic solution
    below; a ``wave`` limit profile gives the next wave, whose right tail is
    snapped to the ladder to name the next platform.  Any other verdict
    halves alpha towards the lower solution.  Each limit-profile attempt
    uses one unit of ``run_budget``.

    With ``refine_waves`` (default) and more than one wave, every profile is
    re-read from a separate run started from a single step between its two
    platforms, so that no neighbouring front leaks into the stored window.
    Speeds always come from the main run.
    """
    params = default_sim_params(spec)
    params.update(sim_params or {})
    p0 = float(params["p0"])
    if ladder is None:
        ladder = odeperiodic.find_periodic_solutions(spec, (0.0, p0))
    ladder = sorted(ladder, key=lambda s: s.q0)
    top = min(range(len(ladder)), key=lambda j: abs(ladder[j].q0 - p0))
    if abs(ladder[top].q0 - p0) > odeperiodic.MERGE_TOL or abs(ladder[0].top) > odeperiodic.MERGE_TOL:
        raise ValueError("p0 and 0 must both be periodic solutions")
    if traj is None:
        traj = run_heaviside(spec, params)
    window = params.get("window", fronts.WINDOW)
    diag = {"stages": [], "ordering_ok": True, "snap_distance": []}
    platforms, waves = [ladder[top]], []
    cur, budget = top, int(run_budget)
    while cur > 0:
        hi_val = ladder[cur].q0 if ladder[cur].kind == "point" else ladder[cur].band[0]
        lo_val = ladder[cur - 1].top
        alpha = 0.5 * (hi_val + lo_val)
        lp = None
        while budget > 0:
            budget -= 1
            try:
                lp = fronts.limit_profile(traj, alpha, window)
                verdict = lp.verdict
            except fronts.LevelRangeError:
                verdict = "out-of-range"
            diag["stages"].append({"platform": hi_val, "alpha": alpha, "verdict": verdict,
                                   "defect": None if lp is None else lp.convergence_defect})
            if verdict == "wave":
                break
            alpha = 0.5 * (alpha + lo_val)
        else:
            raise PartialTerraceError(
                f"run budget exhausted below platform {hi_val:g}",
                {"platforms": [p.q0 for p in platforms], "speeds": [est.c for _, _, est in waves],
                 "stages": diag["stages"]})
        tail = float(lp.profile[0][-1])
        j, dist = _nearest(ladder, tail, cur)
        diag["snap_distance"].append(dist)
        if dist > snap_tol:
            log.warning("wave tail %.4g is %.2g from the nearest periodic solution", tail, dist)
        lower = ladder[j]
        if lower.kind == "interval":
            lower = PeriodicSolution.constant(tail if dist == 0 else lower.band[1], spec.period_T,
                                              len(lower.t) - 1)
        mid = 0.5 * (hi_val + lower.q0)
        track = fronts.track_levels(traj, [mid], method="quintic")[0]
        est = fronts.estimate_speed(track, spec.period_T)
        waves.append((platforms[-1], lower, est))
        platforms.append(lower)
        cur = j
    multi = len(waves) > 1 and params.get("refine_waves", True)
    built = []
    for i, (upper, lower, est) in enumerate(waves):
        source = traj
        if multi:
            source = run_heaviside(spec, params, upper.q0, lower.q0)
            diag.setdefault("refine_speeds", []).append(
                fronts.estimate_speed(fronts.track_levels(
                    source, [0.5 * (upper.q0 + lower.q0)], method="quintic")[0], spec.period_T).c)
        built.append(wave_from_trajectory(source, upper, lower, est.c, est.stderr, window))
    waves = built
    stab = [odeperiodic.classify_stability(spec, p, ladder) if p.kind == "point"
            else None for p in platforms]
    ter = Terrace(platforms, waves, stab, diag, traj)
    diag["ordering_ok"] = ter.speeds_ordered()
    if not diag["ordering_ok"]:
        log.warning("extracted speeds %s violate ordering beyond 3 stderr", ter.speeds)
    return ter


# -- shifts and residuals ---------------------------------------------------------------

@dataclass
class ShiftTrack:
    """eta_i(kT) = a_{i,k} - c_i kT for one wave."""

    wave: int
    t: np.ndarray
    eta: np.ndarray
    eta_bar: float | None
    tail_variation: float
    truncated: bool = False

    def at(self, t, use_limit=False):
        if use_limit and self.eta_bar is not None:
            return self.eta_bar
        return float(np.interp(t, self.t, self.eta))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.eta]), delimiter=",", header="t,eta",
                   comments="", fmt="%.17g")


def fit_shift_functions(traj, terrace, shift_conv_tol=None, tail_fraction=0.25):
    """Shift series of every wave from the anchor-level crossings of ``traj``."""
    T = traj.period_T
    tol = 1e-3 * T if shift_conv_tol is None else shift_conv_tol
    out = []
    for i, w in enumerate(terrace.waves, start=1):
        tr = fronts.track_levels(traj, [w.anchor["level"]], method="quintic")[0]
        t = tr.k * T
        eta = tr.a - w.c * t
        n_tail = max(2, int(math.ceil(tail_fraction * len(eta))))
        tail = eta[-n_tail:]
        tv = float(np.sum(np.abs(np.diff(tail))))
        eta_bar = float(tail[-1]) if tv < tol else None
        out.append(ShiftTrack(i, t, eta, eta_bar, tv, tr.truncated))
    return out


def ansatz(x, t, terrace, shifts):
    """Sum_i U~_i(t, x - c_i t - eta_i) - Sum_{i>=1} p_i(t)."""
    if len(shifts) != terrace.N:
        raise ValueError("need one shift per wave")
    total = np.zeros_like(x, dtype=float)
    for w, eta in zip(terrace.waves, shifts):
        total += w(t, x - w.c * t - eta)
    for p in terrace.platforms[1:]:
        total -= p(t)
    return total


def terrace_residual(field, terrace, shifts, margin_cells=10, use_limit=False):
    """sup |u - ansatz| over the grid interior.

    ``shifts`` holds one value or :class:`ShiftTrack` per wave.
    """
    if terrace.N == 0:
        raise ValueError("terrace has no waves")
    eta = [s.at(field.t, use_limit) if isinstance(s, ShiftTrack) else float(s) for s in shifts]
    x = field.x[margin_cells:len(field.x) - margin_cells]
    u = field.values[margin_cells:len(field.x) - margin_cells]
    return float(np.max(np.abs(u - ansatz(x, field.t, terrace, eta))))


def residual_series(traj, terrace, tracks, use_limit=False, margin_cells=10):
    """(t, residual) at every period snapshot covered by all shift tracks."""
    t_max = min(tr.t[-1] for tr in tracks)
    t_min = max(tr.t[0] for tr in tracks)
    ts, rs = [], []
    for snap in traj.period_snapshots:
        if t_min - 1e-9 <= snap.t <= t_max + 1e-9:
            ts.append(snap.t)
            rs.append(terrace_residual(snap, terrace, tracks, margin_cells, use_limit))
    return np.array(ts), np.array(rs)


@dataclass
class RateFit:
    nu: float
    r2: float
    exponential: bool
    floor_truncated: bool
    window: tuple
    n: int

    def to_dict(self):
        return dict(self.__dict__, window=list(self.window))


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def exponential_rate(t, residual, burn_in=0.3, noise_floor=None, r2_min=0.9):
    """Log-linear fit of ``residual`` over the tail past ``burn_in``.

    The window ends where the decay stalls (local slope flatter than a fifth
    of the overall slope, or below ``noise_floor``); such truncation is
    flagged.  ``exponential`` is False when nu <= 0 or r2 < ``r2_min``.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(residual, dtype=float)
    start = int(math.ceil(burn_in * len(t)))
    t, r = t[start:], r[start:]
    if len(t) < 5 or np.any(r <= 0):
        raise ValueError("need at least five positive residuals past burn-in")
    y = np.log(r)
    end = len(t)
    truncated = False
    if noise_floor is not None:
        below = np.flatnonzero(r <= noise_floor)
        if below.size:
            end = max(int(below[0]), 5)
            truncated = True
    s0, _ = _linfit(t[:end], y[:end])
    if s0 < 0:
        m = max(5, end // 10)
        for j in range(0, end - m + 1):
            rest = [_linfit(t[i:i + m], y[i:i + m])[0] for i in range(j, end - m + 1, max(1, m // 2))]
            if all(s > 0.2 * s0 for s in rest):
                if j >= 5:
                    end = j + m // 2
                    truncated = True
                break
    slope, r2 = _linfit(t[:end], y[:end])
    nu = -slope
    return RateFit(nu, r2, bool(nu > 0 and r2 >= r2_min), truncated,
                   (float(t[0]), float(t[end - 1])), end)


@dataclass
class RegionPartition:
    """Boundary speeds c-bar_0 < c_1 < c-bar_1 < ... < c_N < c-bar_N and margin rho."""

    speeds: tuple
    rho: float | None = None

    def __post_init__(self):
        c = list(self.speeds)
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError("region partition needs strictly increasing speeds")
        self.cbar = [c[0] - 1.0] + [0.5 * (a + b) for a, b in zip(c, c[1:])] + [c[-1] + 1.0]
        limit = 0.25 * min(min(ci - self.cbar[i], self.cbar[i + 1] - ci) for i, ci in enumerate(c))
        if self.rho is None:
            self.rho = limit
        if not 0 < self.rho <= limit:
            raise ValueError(f"rho must lie in (0, {limit:g}]")

    def region(self, t, x):
        """Index i with c-bar_{i-1} t <= x < c-bar_i t (0 left of c-bar_0 t)."""
        return int(np.searchsorted(np.array(self.cbar) * t, x, side="right"))


# -- structural checks -----------------------------------------------------------------

@dataclass
class Clause:
    name: str
    wave: int | None
    passed: bool
    detail: str = ""


@dataclass
class Report:
    clauses: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.clauses)

    def add(self, name, wave, passed, detail=""):
        self.clauses.append(Clause(name, wave, bool(passed), detail))

    def to_dict(self):
        return {"passed": self.passed, "clauses": [c.__dict__ for c in self.clauses]}

    def __str__(self):
        return "\n".join(f"{'PASS' if c.passed else 'FAIL'} {c.name}"
                         + (f" [wave {c.wave}]" if c.wave else "") + (f": {c.detail}" if c.detail else "")
                         for c in self.clauses)


def _ok(flag):
    return flag is True


def check_terrace_structure(terrace, stability=None, speed_zero_tol=SPEED_ZERO_TOL,
                            endpoints_stable=True):
    """Stability/isolation clauses implied by the sign of each wave speed.

    ``stability`` lists one :class:`StabilityRecord` per platform (defaults
    to the records computed during extraction).  With ``endpoints_stable``
    the top platform and 0 must also be linearly stable.
    """
    stab = terrace.stability if stability is None else stability
    rep = Report()
    for i, w in enumerate(terrace.waves, start=1):
        up, lo = stab[i - 1], stab[i]
        c = w.c
        check_up = c > -speed_zero_tol
        check_lo = c < speed_zero_tol
        if check_up:
            ok = up is not None and _ok(up.stable_below) and _ok(up.isolated_below)
            rep.add("upper platform stable and isolated from below", i, ok,
                    f"c={c:.6g}" + ("" if up is None else
                                     f", stable_below={up.stable_below}, isolated_below={up.isolated_below}"))
        if check_lo:
            ok = lo is not None and _ok(lo.stable_above) and _ok(lo.isolated_above)
            rep.add("lower platform stable and isolated from above", i, ok,
                    f"c={c:.6g}" + ("" if lo is None else
                                     f", stable_above={lo.stable_above}, isolated_above={lo.isolated_above}"))
    if endpoints_stable:
        for name, rec in (("top platform linearly stable", stab[0]),
                          ("zero linearly stable", stab[-1])):
            ok = rec is not None and rec.mu > odeperiodic.DEGENERATE_TOL
            rep.add(name, None, ok, "" if rec is None else f"mu={rec.mu:.6g}")
    return rep


def check_minimality(terrace, candidates, tol=1e-6):
    """Each ``(wave_index, candidate)`` must be steeper-or-mutually below U_i.

    Candidates are :class:`WaveProfile` (compared phase by phase) or
    :class:`pde.Field` snapshots (compared with U_i at the same phase).
    """
    rep = Report()
    for n, (i, cand) in enumerate(candidates):
        w = terrace.waves[i - 1]
        if isinstance(cand, WaveProfile):
            pairs = [(w.row(s), cand.row(s)) for s in w.t]
        else:
            pairs = [(w.row(cand.t), np.asarray(cand.values))]
        verdicts = [fronts.is_steeper(a, b, tol) for a, b in pairs]
        ok = all(v in (fronts.STEEPER, fronts.MUTUALLY) for v in verdicts)
        rep.add(f"candidate {n}", i, ok, ",".join(sorted(set(verdicts))))
    return rep
