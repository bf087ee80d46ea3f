"""Explicit super- and sub-solutions and their numerical certification."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import expit, logit

from . import odeperiodic
from .odeperiodic import DEGENERATE_TOL

STENCIL_REFINE = 4
LIP_SAFETY = 1.5
LIP_SAMPLES = 200
EPS_ITERS = 20


def cert_tol(spec, p_max=1.0):
    """Certification tolerance, 1e-6 times the sup of |f| on [-0.1, 1.1 p_max]."""
    return 1e-6 * spec.sup_abs(-0.1, 1.1 * p_max)


# -- b_i, zeta and A_i --------------------------------------------------------------

class PlatformCoefficient:
    """b(t) = exp(mu t / 2 + int_0^t d_u f(s, p(s)) ds) along a stable platform."""

    def __init__(self, spec, platform):
        T = spec.period_T
        t = platform.t
        g = spec.eval_du(t, platform.q)
        g[-1] = g[0]
        if np.ptp(g) == 0.0:
            g_spline = CubicSpline([0.0, T], [g[0], g[0]])
        else:
            g_spline = CubicSpline(t, g, bc_type="periodic")
        self._G = g_spline.antiderivative()
        self.T = T
        per_period = float(self._G(T) - self._G(0.0))
        self.mu = -per_period / T
        if not self.mu > DEGENERATE_TOL:
            raise ValueError(f"platform is not linearly stable (mu={self.mu:.3g})")
        self.platform = platform

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        k = np.floor(t / self.T)
        s = t - k * self.T
        return k * (-self.mu * self.T) + (self._G(s) - self._G(0.0))

    def __call__(self, t):
        return np.exp(0.5 * self.mu * np.asarray(t, dtype=float) + self.integral(t))

    def periodic_factor_sup(self, n=2001):
        """sup over one period of exp(mu t + int_0^t d_u f)."""
        s = np.linspace(0.0, self.T, n)
        return float(np.max(np.exp(self.mu * s + self.integral(s))))


def b_coeff(spec, platform, t):
    """b_i(t) for one platform; raises ValueError unless mu > 0."""
    return PlatformCoefficient(spec, platform)(t)


def bound_M(coefficients):
    """M with 0 <= b_i(t) <= M exp(-mu_i t / 2) for every coefficient given."""
    return max(c.periodic_factor_sup() for c in coefficients)


def _smoothstep(y):
    y = np.clip(y, 0.0, 1.0)
    return y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)


def zeta(x):
    """C^2 bridge: 1 on (-inf, 0], 0 on [3, inf), quintic smoothstep between."""
    return 1.0 - _smoothstep(np.asarray(x, dtype=float) / 3.0)


def zeta_derivatives(x):
    y = np.clip(np.asarray(x, dtype=float) / 3.0, 0.0, 1.0)
    d1 = -30.0 * y**2 * (1 - y) ** 2 / 3.0
    d2 = -60.0 * y * (1 - y) * (1 - 2 * y) / 9.0
    return d1, d2


def A_coeff(b_upper, b_lower, t, x):
    """zeta(x) b_{i-1}(t) + (1 - zeta(x)) b_i(t)."""
    z = zeta(x)
    return z * b_upper(t) + (1.0 - z) * b_lower(t)


# -- comparison functions -----------------------------------------------------------

KINDS = ("fife-mcleod-upper", "fife-mcleod-lower", "flattening-upper", "flattening-lower")


@dataclass(eq=False)
class ComparisonFunction:
    kind: str
    params: dict
    evaluator: object = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown comparison kind {self.kind!r}")

    @property
    def upper(self):
        return self.kind.endswith("upper")

    def __call__(self, t, x):
        return self.evaluator(float(t), np.asarray(x, dtype=float))


def fife_mcleod(kind, wave, c, K, eps, spec, coefficients=None):
    """U_i(t, x + c_i t - c t + K) +/- eps A_i(t, x - c t).

    ``kind`` is ``upper`` (needs c > c_i) or ``lower`` (needs c < c_i).
    ``coefficients`` may pass precomputed (b_{i-1}, b_i).
    """
    if kind not in ("upper", "lower"):
        raise ValueError("kind must be 'upper' or 'lower'")
    if kind == "upper" and not c > wave.c:
        raise ValueError(f"upper Fife-McLeod function needs c > {wave.c:g}")
    if kind == "lower" and not c < wave.c:
        raise ValueError(f"lower Fife-McLeod function needs c < {wave.c:g}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if coefficients is None:
        coefficients = (PlatformCoefficient(spec, wave.upper), PlatformCoefficient(spec, wave.lower))
    b_up, b_lo = coefficients
    sign = 1.0 if kind == "upper" else -1.0

    def evaluate(t, x):
        y = x - c * t
        out = wave(t, y + K)
        if eps:
            out = out + sign * eps * A_coeff(b_up, b_lo, t, y)
        return out

    params = {"c": c, "c_wave": wave.c, "K": K, "eps": eps}
    return ComparisonFunction(f"fife-mcleod-{kind}", params, evaluate)


@dataclass
class Certification:
    kind: str
    params: dict
    min_residual: float
    argmin: tuple
    certified: bool
    tol: float

    def to_dict(self):
        return {"kind": self.kind, "params": _plain(self.params), "min_residual": self.min_residual,
                "argmin": list(self.argmin), "certified": self.certified, "tol": self.tol}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _plain(d):
    return {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v) for k, v in d.items()
            if isinstance(v, (int, float, str, bool, np.floating, np.integer))}


def operator_residual(cf, spec, x, t, hx, ht):
    """W_t - W_xx - f(t, W): 4th-order centred in x, 2nd-order centred in t."""
    w0 = cf(t, x)
    wt = (cf(t + ht, x) - cf(t - ht, x)) / (2 * ht)
    wxx = (-cf(t, x + 2 * hx) + 16 * cf(t, x + hx) - 30 * w0 + 16 * cf(t, x - hx)
           - cf(t, x - 2 * hx)) / (12 * hx * hx)
    return wt - wxx - spec.eval(t, w0)


def check_comparison(cf, spec, grid, times, dt=None, tol=None, refine=STENCIL_REFINE):
    """Scan the operator residual over ``grid`` x ``times``.

    The stencil steps are dx/refine and dt/refine (``dt`` defaults to T/1000)
    and the x-scan uses the grid refined by the same factor.  Upper kinds are certified when the
    minimum residual is >= -tol, lower kinds when the maximum is <= tol.
    ``min_residual`` reports that extremum (the maximum for lower kinds).
    """
    dt = spec.period_T / 1000 if dt is None else dt
    tol = cert_tol(spec) if tol is None else tol
    hx, ht = grid.dx / refine, dt / refine
    xs = np.linspace(grid.xmin, grid.xmax, (grid.n_x - 1) * refine + 1)
    best, where = (math.inf if cf.upper else -math.inf), (math.nan, math.nan)
    for t in times:
        r = operator_residual(cf, spec, xs, float(t), hx, ht)
        j = int(np.argmin(r) if cf.upper else np.argmax(r))
        if (cf.upper and r[j] < best) or (not cf.upper and r[j] > best):
            best, where = float(r[j]), (float(t), float(xs[j]))
    ok = best >= -tol if cf.upper else best <= tol
    return Certification(cf.kind, cf.params, best, where, bool(ok), tol)


def find_eps0(wave, c, spec, grid, times, kind="upper", K=0.0, lo=1e-6, hi=None,
              iters=EPS_ITERS, dt=None, tol=None):
    """Largest eps in [lo, hi] (bisection) whose Fife-McLeod function certifies.

    ``hi`` defaults to half the gap between the wave's platforms.  Returns
    ``(eps_hat, certification)``; eps_hat is 0.0 when even ``lo`` fails.
    """
    coeffs = (PlatformCoefficient(spec, wave.upper), PlatformCoefficient(spec, wave.lower))
    if hi is None:
        gap = np.min(wave.upper(wave.t) - wave.lower(wave.t))
        hi = 0.5 * float(gap)

    def certify(eps):
        cf = fife_mcleod(kind, wave, c, K, eps, spec, coeffs)
        return check_comparison(cf, spec, grid, times, dt, tol)

    top = certify(hi)
    if top.certified:
        return hi, top
    good = certify(lo)
    if not good.certified:
        return 0.0, good
    a, b = lo, hi
    for _ in range(iters):
        m = 0.5 * (a + b)
        rep = certify(m)
        if rep.certified:
            a, good = m, rep
        else:
            b = m
    return a, good


# -- flattening super/sub-solutions ---------------------------------------------------

class FrontLikeError(ValueError):
    """Initial data violate one of the front-like bounds."""


def gamma(x):
    """(1 + tanh(x / 2)) / 2, i.e. the logistic function."""
    return expit(x)


def lipschitz_du(spec, u_lo, u_hi, n=LIP_SAMPLES, safety=LIP_SAFETY):
    """Sampled Lipschitz constant of d_u f in u, times ``safety``."""
    t = np.linspace(0.0, spec.period_T, n)
    u = np.linspace(u_lo, u_hi, n)
    tt, uu = np.meshgrid(t, u, indexing="ij")
    g = spec.eval_du(tt, uu)
    slope = np.abs(np.diff(g, axis=1)) / np.diff(u)
    return safety * float(np.max(slope))


def _ode_path(spec, h0, horizon):
    sol = odeperiodic.integrate(spec, h0, horizon, rtol=1e-12, atol=1e-14, dense=True)
    return sol.sol


def front_like_bounds(u0, edge_fraction=0.1):
    v = np.asarray(u0.values)
    m = max(2, int(edge_fraction * len(v)))
    return {"sup": float(v.max()), "inf": float(v.min()),
            "limsup_right": float(v[-m:].max()), "liminf_right": float(v[-m:].min()),
            "liminf_left": float(v[:m].min()), "limsup_left": float(v[:m].max())}


def check_front_like(u0, I_plus, I_minus):
    """Raise :class:`FrontLikeError` unless the data satisfy the front-like bounds."""
    b = front_like_bounds(u0)
    checks = (("sup u0 in I_+", b["sup"] in I_plus or b["sup"] <= I_plus.lo),
              ("liminf at -inf in I_+", b["liminf_left"] in I_plus),
              ("inf u0 in I_-", b["inf"] in I_minus or b["inf"] >= I_minus.hi),
              ("limsup at +inf in I_-", b["limsup_right"] in I_minus))
    for name, ok in checks:
        if not ok:
            raise FrontLikeError(f"front-like bound violated: {name} ({b})")
    return b


def _flattening(u0, spec, kind, top, zero, I_plus, I_minus, horizon, margin):
    T = spec.period_T
    if top is None or zero is None:
        ladder = odeperiodic.find_periodic_solutions(spec, (0.0, max(1.0, float(np.max(u0.values)))))
        stable = [s for s in ladder if s.kind == "point"
                  and odeperiodic.floquet_exponent(spec, s) > DEGENERATE_TOL]
        top = top or max(stable, key=lambda s: s.q0)
        zero = zero or min(ladder, key=lambda s: abs(s.q0))
    I_plus = I_plus or odeperiodic.attraction_interval(spec, top, "plus")
    I_minus = I_minus or odeperiodic.attraction_interval(spec, zero, "minus")
    b = check_front_like(u0, I_plus, I_minus)
    p0 = top.q0
    if kind == "upper":
        hp_ref, hm_ref = b["sup"], b["limsup_right"]
        step_p = min(margin * p0, 0.5 * (I_plus.hi - hp_ref))
        step_m = min(margin * p0, 0.5 * (I_minus.hi - hm_ref))
        h_plus, h_minus = hp_ref + step_p, hm_ref + step_m
    else:
        hp_ref, hm_ref = b["liminf_left"], b["inf"]
        step_p = min(margin * p0, 0.5 * (hp_ref - I_plus.lo))
        step_m = min(margin * p0, 0.5 * (hm_ref - I_minus.lo))
        h_plus, h_minus = hp_ref - step_p, hm_ref - step_m
    if not h_plus > h_minus:
        raise FrontLikeError("need h_+ > h_-")
    H_plus = _ode_path(spec, h_plus, horizon)
    H_minus = _ode_path(spec, h_minus, horizon)
    ts = np.linspace(0.0, horizon, int(horizon / T * 200) + 1)
    gap = H_plus(ts)[0] - H_minus(ts)[0]
    sup_gap = float(max(np.max(np.abs(gap)), abs(top.q.max() - zero.q.min())))
    u_lo = min(-0.1, h_minus - 0.1)
    u_hi = max(1.1 * p0, h_plus + 0.1)
    L = lipschitz_du(spec, u_lo, u_hi)
    C2 = 1.0 + L * sup_gap
    x = u0.x
    v = np.asarray(u0.values)
    span = h_plus - h_minus
    r = (h_plus - v) / span
    if kind == "upper":
        need = r < 1.0
        C1 = float(np.max(x[need] - logit(r[need]))) + 1e-9 if np.any(need) else float(x[0])
        sgn = -1.0
    else:
        need = r > 0.0
        C1 = float(np.min(x[need] - logit(np.minimum(r[need], 1 - 1e-16)))) - 1e-9 \
            if np.any(need) else float(x[-1])
        sgn = 1.0

    def evaluate(t, xx):
        hp = H_plus(t)[0]
        hm = H_minus(t)[0]
        g = gamma(xx - C1 + sgn * C2 * t)
        return hp * (1.0 - g) + hm * g

    params = {"h_plus": h_plus, "h_minus": h_minus, "C1": C1, "C2": C2, "L": L,
              "sup_gap": sup_gap, "horizon": horizon}
    return ComparisonFunction(f"flattening-{kind}", params, evaluate)


def flattening_super(u0, spec, top=None, zero=None, I_plus=None, I_minus=None,
                     horizon=50.0, margin=0.05):
    """H_+(t)(1 - gamma(x - C1 - C2 t)) + H_-(t) gamma(x - C1 - C2 t) above ``u0``.

    h_+ exceeds sup u0 and h_- exceeds the right-end limsup of u0, each by
    ``margin * p(0)`` or half the distance to the basin edge.  C1 makes
    W(0, .) >= u0 on the grid; C2 = 1 + L sup |H_+ - H_-| with L sampled.
    Valid on [0, ``horizon``].
    """
    return _flattening(u0, spec, "upper", top, zero, I_plus, I_minus, horizon, margin)


def flattening_sub(u0, spec, top=None, zero=None, I_plus=None, I_minus=None,
                   horizon=50.0, margin=0.05):
    """Mirror of :func:`flattening_super`: below ``u0``, front moving left at C2."""
    return _flattening(u0, spec, "lower", top, zero, I_plus, I_minus, horizon, margin)


def dominates(cf, traj, tol=1e-8):
    """max over snapshots of the amount by which the run escapes ``cf``."""
    worst = -math.inf
    for snap in traj.snapshots:
        w = cf(snap.t, snap.x)
        d = snap.values - w if cf.upper else w - snap.values
        worst = max(worst, float(np.max(d)))
    return worst <= tol, worst


# -- sandwich fit ---------------------------------------------------------------------

@dataclass
class SandwichFit:
    K0_hat: float
    beta0_hat: float
    valid_from: float
    failed: bool
    t: np.ndarray = field(default_factory=lambda: np.array([]))
    violation: np.ndarray = field(default_factory=lambda: np.array([]))
    reason: str = ""

    def to_dict(self):
        return {"K0_hat": self.K0_hat, "beta0_hat": self.beta0_hat,
                "valid_from": self.valid_from, "failed": self.failed, "reason": self.reason,
                "t": self.t.tolist(), "violation": self.violation.tolist()}


def sandwich_violations(traj_u, traj_plus, traj_minus):
    """Per common snapshot: max of (u - u_plus)_+ and (u_minus - u)_+."""
    by_t = lambda tr: {round(s.t * 1e9): s for s in tr.snapshots}
    P, M = by_t(traj_plus), by_t(traj_minus)
    ts, vs = [], []
    for s in traj_u.snapshots:
        key = round(s.t * 1e9)
        if key not in P or key not in M:
            continue
        up, lo = P[key], M[key]
        if up.grid != s.grid or lo.grid != s.grid:
            raise ValueError("sandwich runs must share the grid")
        v = max(float(np.max(s.values - up.values)), float(np.max(lo.values - s.values)), 0.0)
        ts.append(s.t)
        vs.append(v)
    return np.array(ts), np.array(vs)


def sandwich_fit(traj_u, traj_plus, traj_minus, floor=1e-12, burn_in=0.0):
    """Smallest (K0, beta0) with violation(t) <= K0 exp(-beta0 t) at every snapshot.

    beta0 comes from a log-linear fit of the violations above ``floor``;
    K0 is then the smallest amplitude that makes the bound hold.  ``failed``
    is set when 0 or the top state (the left value of ``traj_plus``) is not
    linearly stable, or when the violations do not decay.
    """
    t, v = sandwich_violations(traj_u, traj_plus, traj_minus)
    keep = t >= burn_in
    t, v = t[keep], v[keep]
    if len(t) == 0:
        raise ValueError("no common snapshots")
    spec = traj_u.spec
    p0 = float(traj_plus.snapshots[0].values[0])
    for name, h0 in (("0", 0.0), ("top state", p0)):
        mu = odeperiodic.floquet_exponent(spec, odeperiodic.sample_periodic(spec, h0))
        if not mu > DEGENERATE_TOL:
            return SandwichFit(float(v.max()), math.nan, float(t[0]), True, t, v,
                               f"{name} not linearly stable (mu={mu:.3g})")
    pos = v > floor
    if not np.any(pos):
        return SandwichFit(0.0, math.inf, float(t[0]), False, t, v)
    tp, lv = t[pos], np.log(v[pos])
    if pos.sum() < 2:
        beta = math.inf if not pos[-1] else 0.0
    else:
        beta = -float(np.polyfit(tp, lv, 1)[0])
    # decay must also show up end-to-end, not only in the fitted slope
    decays = (not pos[-1]) or (v[-1] < 0.1 * v[pos].max() and beta > 0)
    if not decays or not beta > 0:
        return SandwichFit(float(v.max()), beta, float(t[0]), True, t, v, "violations do not decay")
    K0 = float(np.max(v * np.exp(beta * t))) if math.isfinite(beta) else float(v.max())
    return SandwichFit(K0, beta, float(t[0]), False, t, v)
