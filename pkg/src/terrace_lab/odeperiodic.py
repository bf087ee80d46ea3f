"""Periodic solutions of the homogeneous ODE h' = f(t, h).

Fixed points of the Poincare map h0 -> h(T) are located by sign bracketing
on a seed grid and refined with Brent's method; stretches where the map is
the identity (flat reaction terms such as combustion below ignition) are
reported as intervals of equilibria.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

ODE_TOL = 1e-10
FP_TOL = 1e-9
MERGE_TOL = 1e-6
DELTA_PROBE = 1e-3
N_PROBE = 50
DEGENERATE_TOL = 1e-4
BLOWUP = 1e8


class DivergenceError(RuntimeError):
    def __init__(self, t_escape):
        super().__init__(f"solution escaped to infinity near t={t_escape:g}")
        self.t_escape = t_escape


def _rhs(spec):
    return lambda t, h: [spec.eval(t, h[0])]


def _escape_event(t, h):
    return abs(h[0]) - BLOWUP


_escape_event.terminal = True


def integrate(spec, h0, t_end, t0=0.0, rtol=ODE_TOL, atol=None, dense=False, t_eval=None):
    """Adaptive DOP853 integration of the homogeneous ODE from ``h0``."""
    atol = rtol * 1e-2 if atol is None else atol
    sol = solve_ivp(_rhs(spec), (t0, t_end), [float(h0)], method="DOP853", rtol=rtol,
                    atol=atol, events=_escape_event, dense_output=dense, t_eval=t_eval)
    if sol.status == 1:
        raise DivergenceError(float(sol.t_events[0][0]))
    if sol.status != 0:
        raise RuntimeError(sol.message)
    return sol


def poincare_map(spec, h0, n_periods=1, rtol=ODE_TOL):
    """h(n T) for the solution starting at h(0) = h0."""
    if not math.isfinite(h0):
        raise ValueError("h0 must be finite")
    return float(integrate(spec, h0, n_periods * spec.period_T, rtol=rtol).y[0, -1])


@dataclass(eq=False)
class PeriodicSolution:
    """A T-periodic solution sampled on ``n_t + 1`` uniform points of [0, T].

    For ``kind == "interval"`` the samples describe the lower edge of the band
    ``[lo, hi]`` of constant equilibria.
    """

    t: np.ndarray
    q: np.ndarray
    period_T: float
    kind: str = "point"
    band: tuple | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float)

    @property
    def q0(self):
        return float(self.q[0])

    @property
    def top(self):
        return self.band[1] if self.kind == "interval" else self.q0

    def __call__(self, t):
        """Periodic cubic-spline interpolation of q."""
        spline = self.__dict__.get("_spline")
        if spline is None:
            q = self.q.copy()
            q[-1] = q[0]
            if np.ptp(q) == 0.0:
                spline = lambda s, c=float(q[0]): np.full(np.shape(s), c) if np.ndim(s) else c
            else:
                spline = CubicSpline(self.t, q, bc_type="periodic")
            self.__dict__["_spline"] = spline
        tt = np.mod(np.asarray(t, dtype=float), self.period_T)
        out = spline(tt)
        return float(out) if np.ndim(out) == 0 else out

    def closing_defect(self):
        return abs(self.q[-1] - self.q[0])

    def ode_residual(self, spec):
        """max |q' - f(t, q)| using spline differentiation of the samples."""
        spline = CubicSpline(self.t, self.q)
        return float(np.max(np.abs(spline(self.t, 1) - spec.eval(self.t, self.q))))

    def to_dict(self):
        out = {"period_T": self.period_T, "t": self.t.tolist(), "q": self.q.tolist(),
               "kind": "interval-of-equilibria" if self.kind == "interval" else "point"}
        if self.band is not None:
            out["band"] = list(self.band)
        return out

    @classmethod
    def from_dict(cls, data):
        kind = "interval" if data["kind"] == "interval-of-equilibria" else "point"
        band = tuple(data["band"]) if "band" in data else None
        return cls(np.array(data["t"]), np.array(data["q"]), data["period_T"], kind, band)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.q]), delimiter=",", header="t,q",
                   comments="", fmt="%.17g")

    @classmethod
    def constant(cls, value, period_T, n_t=200):
        t = np.linspace(0.0, period_T, n_t + 1)
        return cls(t, np.full_like(t, float(value)), period_T)


def sample_periodic(spec, h0, n_t=200, rtol=ODE_TOL):
    T = spec.period_T
    t = np.linspace(0.0, T, n_t + 1)
    sol = integrate(spec, h0, T, rtol=rtol, t_eval=t)
    return PeriodicSolution(t, sol.y[0], T)


def find_periodic_solutions(spec, search_interval, n_seed=64, n_t=200, fp_tol=FP_TOL,
                            merge_tol=MERGE_TOL):
    """All periodic solutions with q(0) in ``search_interval``, increasing in q(0)."""
    lo, hi = map(float, search_interval)
    if not hi > lo:
        return []
    if n_seed < 8:
        raise ValueError("n_seed must be at least 8")
    seeds = np.linspace(lo, hi, n_seed + 1)
    g = np.array([poincare_map(spec, h) - h for h in seeds])

    def gfun(h):
        return poincare_map(spec, h) - h

    flat = np.abs(g) < fp_tol
    roots = []
    bands = []
    i = 0
    while i < len(seeds):
        if flat[i]:
            j = i
            while j + 1 < len(seeds) and flat[j + 1]:
                j += 1
            if j - i + 1 >= 3:
                a = _plateau_edge(gfun, seeds[i], seeds[i - 1] if i > 0 else None, fp_tol)
                b = _plateau_edge(gfun, seeds[j], seeds[j + 1] if j + 1 < len(seeds) else None, fp_tol)
                bands.append((a, b))
            else:
                roots.extend(seeds[i:j + 1])
            i = j + 1
            continue
        if i + 1 < len(seeds) and not flat[i + 1] and g[i] * g[i + 1] < 0:
            roots.append(brentq(gfun, seeds[i], seeds[i + 1], xtol=1e-13, rtol=1e-15))
        i += 1
    # polish isolated roots that landed on seeds
    roots = sorted(roots)
    merged = []
    for r in roots:
        if any(b[0] - merge_tol <= r <= b[1] + merge_tol for b in bands):
            continue
        if merged and r - merged[-1] < merge_tol:
            continue
        merged.append(r)
    out = [sample_periodic(spec, r, n_t) for r in merged]
    for a, b in bands:
        sol = PeriodicSolution.constant(a, spec.period_T, n_t)
        sol.kind = "interval"
        sol.band = (a, b)
        out.append(sol)
    out.sort(key=lambda s: s.q0)
    return out


def _plateau_edge(gfun, inside, outside, fp_tol, iters=60):
    """Bisect between a flat seed and its non-flat neighbour for the plateau edge."""
    if outside is None:
        return float(inside)
    a, b = float(inside), float(outside)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if abs(gfun(m)) < fp_tol:
            a = m
        else:
            b = m
        if abs(b - a) < 1e-12:
            break
    return a


@dataclass
class StabilityRecord:
    """Linear and empirical stability of one periodic solution.

    Tri-state fields hold True, False or None (undetermined).
    """

    mu: float
    floquet: float
    stable_above: bool | None
    stable_below: bool | None
    isolated_above: bool | None
    isolated_below: bool | None
    floquet_map: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def linearly_stable(self):
        return self.mu > DEGENERATE_TOL

    @property
    def linearly_unstable(self):
        return self.mu < -DEGENERATE_TOL

    def to_dict(self):
        return {
            "mu": self.mu, "floquet": self.floquet, "floquet_map": self.floquet_map,
            "stable_above": self.stable_above, "stable_below": self.stable_below,
            "isolated_above": self.isolated_above, "isolated_below": self.isolated_below,
        }


def floquet_exponent(spec, q):
    """mu = -(1/T) int_0^T d_u f(t, q(t)) dt by the periodic trapezoid rule."""
    dfu = spec.eval_du(q.t[:-1], q.q[:-1])
    return -float(np.mean(dfu))


def poincare_derivative(spec, h0, delta=1e-5):
    """Central difference of the Poincare map at ``h0`` (tight tolerances)."""
    plus = poincare_map(spec, h0 + delta, rtol=1e-13)
    minus = poincare_map(spec, h0 - delta, rtol=1e-13)
    return (plus - minus) / (2 * delta)


def _probe(spec, start, target, n_periods):
    try:
        end = poincare_map(spec, start, n_periods, rtol=1e-9)
    except DivergenceError:
        return math.inf
    return abs(end - target)


def classify_stability(spec, q, neighbours=None, delta_probe=DELTA_PROBE, n_probe=N_PROBE,
                       degenerate_tol=DEGENERATE_TOL, merge_tol=MERGE_TOL):
    """Floquet exponent plus probe-based one-sided stability of ``q``.

    ``neighbours`` is the full ordered output of
    :func:`find_periodic_solutions`; it decides the isolation flags.
    """
    if q.kind == "interval":
        mu = 0.0
        lo_edge, hi_edge = q.band
    else:
        mu = floquet_exponent(spec, q)
        lo_edge = hi_edge = q.q0
    T = spec.period_T
    verdicts = {}
    for side, start, edge in (("above", hi_edge + delta_probe, hi_edge),
                              ("below", lo_edge - delta_probe, lo_edge)):
        dist = _probe(spec, start, edge, n_probe)
        if dist < 0.5 * delta_probe:
            verdicts[side] = True
        elif dist > delta_probe * (1 + 1e-6):
            verdicts[side] = False
        else:
            verdicts[side] = None
    probes = dict(verdicts)
    if mu > degenerate_tol:
        verdicts = {"above": True, "below": True}
    elif mu < -degenerate_tol:
        verdicts = {"above": False, "below": False}
    iso_above = iso_below = None
    if neighbours is not None:
        tops = sorted(s.top for s in neighbours if s is not q and s.q0 > hi_edge)
        bots = sorted(s.top for s in neighbours if s is not q and s.top < lo_edge)
        iso_above = not tops or tops[0] - hi_edge > merge_tol
        iso_below = not bots or lo_edge - bots[-1] > merge_tol
    floquet_map = None
    if q.kind == "point":
        floquet_map = poincare_derivative(spec, q.q0)
    return StabilityRecord(mu, math.exp(-mu * T), verdicts["above"], verdicts["below"],
                           iso_above, iso_below, floquet_map, extra={"probes": probes})


@dataclass
class AttractionInterval:
    """Open basin (lo, hi) of q(0); infinite ends mean "beyond the search window"."""

    lo: float
    hi: float
    window: tuple

    def __contains__(self, h):
        return self.lo < h < self.hi

    def as_tuple(self):
        return (self.lo, self.hi)


def attraction_interval(spec, q, side="plus", window=None, ladder=None, n_basin=200,
                        basin_tol=1e-4, iters=24, snap_tol=1e-3):
    """Basin of attraction of a linearly stable periodic solution.

    ``side`` only labels the result (``plus`` for the basin I_+ of the top
    state, ``minus`` for I_- of 0).  Endpoints are located by bisection on
    whether a probe started there ends within ``basin_tol`` of q(0) after
    ``n_basin`` periods; they are snapped onto a periodic solution from
    ``ladder`` when one lies within ``snap_tol``.
    """
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    if q.kind != "point" or floquet_exponent(spec, q) <= DEGENERATE_TOL:
        raise ValueError("attraction_interval needs a linearly stable periodic solution")
    q0 = q.q0
    if window is None:
        window = (-1.0, 2.0 * max(q0, 1.0) if q0 > 0 else 2.0)
    lo_w, hi_w = window

    def converges(h):
        return _probe(spec, h, q0, n_basin) < basin_tol

    def edge(inside, outside):
        if converges(outside):
            return math.inf if outside > inside else -math.inf
        a, b = inside, outside
        for _ in range(iters):
            m = 0.5 * (a + b)
            if converges(m):
                a = m
            else:
                b = m
        est = 0.5 * (a + b)
        if ladder:
            best = min(ladder, key=lambda s: abs(s.q0 - est))
            if best is not q and abs(best.q0 - est) < snap_tol:
                return best.q0
        return est

    return AttractionInterval(edge(q0, lo_w), edge(q0, hi_w), (lo_w, hi_w))
