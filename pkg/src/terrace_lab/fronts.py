"""Level sets, speeds, zero numbers and steepness of simulated fronts."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq

LEVEL_TOL = 1e-8
PROFILE_TOL = 1e-4
WINDOW = 40.0


class LevelRangeError(ValueError):
    """The requested level is not attained by the field."""


class AmbiguityError(ValueError):
    """A unique crossing was requested but several exist."""


class InsufficientDataError(ValueError):
    pass


def _xv(field_or_values, x=None):
    if x is None:
        return np.asarray(field_or_values.x), np.asarray(field_or_values.values)
    return np.asarray(x, dtype=float), np.asarray(field_or_values, dtype=float)


def crossings(values, x, alpha):
    """All crossing abscissae of ``alpha`` by linear interpolation, left to right."""
    d = values - alpha
    nz = np.flatnonzero(d != 0)
    if nz.size < 2:
        return np.array([])
    s = np.sign(d[nz])
    flips = np.flatnonzero(s[1:] != s[:-1])
    out = np.empty(flips.size)
    for n, f in enumerate(flips):
        i, k = nz[f], nz[f + 1]
        if k == i + 1:
            out[n] = x[i] + d[i] / (d[i] - d[k]) * (x[k] - x[i])
        else:
            out[n] = 0.5 * (x[i + 1] + x[k - 1])
    return out


def _spline_refine(values, x, alpha, x_lin, k=3):
    """Root of a local degree-``k`` interpolant inside the bracketing cell."""
    half = (k + 1) // 2
    j = int(np.searchsorted(x, x_lin)) - 1
    j = min(max(j, half - 1), len(x) - half - 1)
    lo, hi = j - half + 1, j + half + 1
    seg = make_interp_spline(x[lo:hi], values[lo:hi], k=k)
    a, b = x[j], x[j + 1]
    fa, fb = seg(a) - alpha, seg(b) - alpha
    if fa * fb > 0:
        return x_lin
    return brentq(lambda s: float(seg(s)) - alpha, a, b, xtol=1e-14)


def level_crossing(field, alpha, which="rightmost", x=None, method="linear"):
    """Position where the field crosses ``alpha``.

    ``which`` is ``rightmost``, ``leftmost`` or ``unique``; ``method`` set
    to ``"cubic"`` or ``"quintic"`` refines the linear estimate with a local
    interpolant through four or six points.
    """
    xs, v = _xv(field, x)
    if not (v.min() < alpha < v.max()):
        raise LevelRangeError(f"level {alpha:g} outside ({v.min():g}, {v.max():g})")
    pts = crossings(v, xs, alpha)
    if which == "unique":
        if pts.size > 1:
            raise AmbiguityError(f"{pts.size} crossings of level {alpha:g}")
        pos = pts[0]
    elif which == "rightmost":
        pos = pts[-1]
    elif which == "leftmost":
        pos = pts[0]
    else:
        raise ValueError(f"unknown crossing selector {which!r}")
    k = {"linear": 1, "cubic": 3, "quintic": 5}[method]
    if k > 1 and len(xs) > k:
        pos = _spline_refine(v, xs, alpha, pos, k)
    return float(pos)


@dataclass
class LevelTrack:
    """Positions a_k of the ``alpha`` crossing at t = kT."""

    alpha: float
    k: np.ndarray
    a: np.ndarray
    truncated: bool = False

    @property
    def increments(self):
        return np.diff(self.a)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.k, self.a]), delimiter=",", header="k,a_k",
                   comments="", fmt=["%d", "%.17g"])

    def to_dict(self):
        return {"alpha": self.alpha, "k": self.k.tolist(), "a": self.a.tolist(),
                "truncated": self.truncated}


def track_levels(traj, alphas, which="rightmost", method="linear"):
    """One :class:`LevelTrack` per level over the period snapshots of ``traj``."""
    snaps = traj.period_snapshots
    ks = traj.period_indices
    tracks = []
    for alpha in alphas:
        kk, aa = [], []
        truncated = False
        for k, snap in zip(ks, snaps):
            try:
                aa.append(level_crossing(snap, alpha, which, method=method))
            except LevelRangeError:
                if kk:
                    truncated = True
                    break
                continue
            kk.append(k)
        tracks.append(LevelTrack(float(alpha), np.array(kk, dtype=int), np.array(aa), truncated))
    return tracks


@dataclass
class SpeedEstimate:
    c: float
    stderr: float
    c_increments: float
    disagree: bool
    n: int

    def __iter__(self):
        return iter((self.c, self.stderr))


def default_burn_in(n):
    return int(math.ceil(0.3 * n))


def estimate_speed(track, T, burn_in=None):
    """Least-squares slope of a_k against kT over k >= burn_in."""
    n = len(track.a)
    burn_in = default_burn_in(n) if burn_in is None else int(burn_in)
    if n < burn_in + 10:
        raise InsufficientDataError(f"need {burn_in + 10} entries, have {n}")
    t = track.k[burn_in:] * T
    a = track.a[burn_in:]
    tm = t - t.mean()
    sxx = float(tm @ tm)
    c = float(tm @ (a - a.mean())) / sxx
    resid = a - a.mean() - c * tm
    dof = len(t) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else math.inf
    inc = float(np.mean(np.diff(a))) / T
    disagree = abs(inc - c) > 3 * stderr and abs(inc - c) > 1e-12 * max(1.0, abs(c))
    return SpeedEstimate(c, stderr, inc, bool(disagree), len(t))


def sign_changes(samples, eps=0.0):
    """Number of sign changes after dropping entries with |v| <= eps; -1 if none remain."""
    v = np.asarray(samples, dtype=float)
    v = v[np.abs(v) > eps]
    if v.size == 0:
        return -1
    return int(np.count_nonzero(np.signbit(v[1:]) != np.signbit(v[:-1])))


def _offset_cells(g1, g2, shift):
    dx = g1.dx
    if abs(g2.dx - dx) > 1e-12 * dx:
        raise ValueError("grids have different spacing")
    m = (g1.xmin + shift - g2.xmin) / dx
    if abs(m - round(m)) > 1e-6:
        raise ValueError("shift and grid offsets must be whole cells")
    return int(round(m))


def shifted_difference(f1, f2, shift):
    """u1(x) - u2(x + shift) over the common window."""
    m = _offset_cells(f1.grid, f2.grid, shift)
    n1, n2 = f1.grid.n_x, f2.grid.n_x
    i0 = max(0, -m)
    i1 = min(n1, n2 - m)
    if i1 <= i0:
        return np.array([])
    return f1.values[i0:i1] - f2.values[i0 + m:i1 + m]


@dataclass
class ZeroNumberSeries:
    t: np.ndarray
    z: np.ndarray

    def non_increasing(self):
        return bool(np.all(np.diff(self.z) <= 0))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.z]), delimiter=",", header="t,Z",
                   comments="", fmt=["%.17g", "%d"])


def zero_number_series(traj1, traj2, shift=0.0, time_lag=0, eps=None):
    """Z(u1(t, .) - u2(t + lag T, . + shift)) at every common snapshot time."""
    T = traj1.period_T
    if abs(traj2.period_T - T) > 1e-12 * T:
        raise ValueError("trajectories have different periods")
    by_time = {round(s.t / T * 1e9): s for s in traj2.snapshots}
    ts, zs = [], []
    for s1 in traj1.snapshots:
        key = round((s1.t + time_lag * T) / T * 1e9)
        s2 = by_time.get(key)
        if s2 is None:
            continue
        w = shifted_difference(s1, s2, shift)
        scale = max(np.max(np.abs(s1.values)), np.max(np.abs(s2.values)))
        e = 1e-9 * scale if eps is None else eps
        ts.append(s1.t)
        zs.append(sign_changes(w, e))
    if not ts:
        raise ValueError("no common snapshot times")
    return ZeroNumberSeries(np.array(ts), np.array(zs, dtype=int))


STEEPER = "steeper"
LESS_STEEP = "less_steep"
MUTUALLY = "mutually"
INCOMPARABLE = "incomparable"


def _values(v):
    if hasattr(v, "values"):
        return np.asarray(v.values, dtype=float), v.grid.dx
    return np.asarray(v, dtype=float), None


def is_steeper(v1, v2, tol=1e-9):
    """Steepness order of two non-increasing profiles on equally spaced grids.

    ``v1`` is steeper than ``v2`` when, for every relative shift by a whole
    number of cells, v1 - v2(. + shift) changes sign at most once and only
    from positive (left) to negative (right): wherever the graphs meet, v1 is
    above on the left and below on the right.  Differences within ``tol`` are
    ignored.
    """
    a, dx1 = _values(v1)
    b, dx2 = _values(v2)
    if dx1 is not None and dx2 is not None and abs(dx1 - dx2) > 1e-12 * dx1:
        raise ValueError("profiles must share the grid spacing")
    for v in (a, b):
        if np.any(np.diff(v) > tol):
            raise ValueError("steepness is only defined here for non-increasing profiles")
    if a.min() >= b.max() - tol or b.min() >= a.max() - tol:
        return MUTUALLY
    n1, n2 = len(a), len(b)
    ok_down = ok_up = True
    for m in range(-(n1 - 1), n2):
        i0, i1 = max(0, -m), min(n1, n2 - m)
        w = a[i0:i1] - b[i0 + m:i1 + m]
        pos = np.flatnonzero(w > tol)
        neg = np.flatnonzero(w < -tol)
        if pos.size == 0 or neg.size == 0:
            continue
        if neg[0] < pos[-1]:
            ok_down = False
        if pos[0] < neg[-1]:
            ok_up = False
        if not (ok_down or ok_up):
            return INCOMPARABLE
    if ok_down and ok_up:
        return MUTUALLY
    return STEEPER if ok_down else LESS_STEEP


@dataclass
class LimitProfile:
    """Period snapshots re-centred on their ``anchor_alpha`` crossing.

    ``profile[j]`` is u(KT + t_j, a_K + xi) for the phases ``t`` of the last
    complete period.
    """

    xi: np.ndarray
    t: np.ndarray
    profile: np.ndarray
    anchor_alpha: float
    convergence_defect: float
    verdict: str
    anchor_k: int
    anchor_position: float
    increments: np.ndarray = field(default_factory=lambda: np.array([]))

    def to_dict(self):
        return {
            "anchor_alpha": self.anchor_alpha, "convergence_defect": self.convergence_defect,
            "verdict": self.verdict, "anchor_k": self.anchor_k,
            "anchor_position": self.anchor_position, "xi": self.xi.tolist(),
            "t": self.t.tolist(), "profile": self.profile.tolist(),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def _recentre(snap, centre, xi):
    """Quintic-spline samples of ``snap`` at ``centre + xi``, constant outside."""
    x = snap.x
    target = centre + xi
    lo = max(0, int(np.searchsorted(x, target[0])) - 4)
    hi = min(len(x), int(np.searchsorted(x, target[-1])) + 5)
    spline = make_interp_spline(x[lo:hi], snap.values[lo:hi], k=5)
    inside = (target >= x[0]) & (target <= x[-1])
    out = np.empty_like(target)
    out[inside] = spline(target[inside])
    out[target < x[0]] = snap.values[0]
    out[target > x[-1]] = snap.values[-1]
    return out


def limit_profile(traj, alpha, window=WINDOW, profile_tol=PROFILE_TOL, flat_tol=None,
                  which="rightmost"):
    """Shifted-snapshot limit around the ``alpha`` level and its classification.

    The verdict is ``wave`` when the last two shifted period snapshots agree
    within ``profile_tol`` and the profile varies by more than ``flat_tol``
    over the window; ``platform`` when the profile is flat at level ``alpha``
    on a half window (``alpha`` sits on a plateau) or the crossing jumps back
    and forth without bound; ``undecided`` otherwise.
    """
    snaps = traj.period_snapshots
    if len(snaps) < 3:
        raise InsufficientDataError("need at least three period snapshots")
    p0 = float(np.max(np.abs(snaps[0].values)))
    flat_tol = 1e-3 * p0 if flat_tol is None else flat_tol
    dx = traj.grid.dx
    nh = int(round(window / dx))
    xi = np.arange(-nh, nh + 1) * dx
    track = track_levels(traj, [alpha], which=which, method="quintic")[0]
    if len(track.a) < 3:
        raise LevelRangeError(f"level {alpha:g} not attained at enough period snapshots")
    by_k = dict(zip(traj.period_indices, snaps))
    k_last, k_prev = track.k[-1], track.k[-2]
    w_last = _recentre(by_k[k_last], track.a[-1], xi)
    w_prev = _recentre(by_k[k_prev], track.a[-2], xi)
    defect = float(np.max(np.abs(w_last - w_prev)))
    variation = float(np.ptp(w_last))
    left, right = w_last[:nh], w_last[nh + 1:]
    half_flat = (np.max(np.abs(left - alpha)) <= flat_tol) or (np.max(np.abs(right - alpha)) <= flat_tol)
    inc = track.increments
    tail = inc[len(inc) // 2:]
    wild = tail.size > 4 and tail.max() > 0.25 * window and tail.min() < -0.25 * window
    noise = 10 * LEVEL_TOL
    decreasing = bool(np.all(np.diff(w_last) <= noise))
    if variation <= flat_tol or half_flat or wild:
        verdict = "platform"
    elif defect < profile_tol and decreasing:
        verdict = "wave"
    else:
        verdict = "undecided"
    # phases of the period starting at the second-to-last anchor
    T = traj.period_T
    phases = [s for s in traj.snapshots if k_prev * T - 1e-9 <= s.t < k_last * T - 1e-9]
    t_ph = np.array([s.t - k_prev * T for s in phases])
    prof = np.array([_recentre(s, track.a[-2], xi) for s in phases])
    return LimitProfile(xi, t_ph, prof, float(alpha), defect, verdict, int(k_prev),
                        float(track.a[-2]), inc)


@dataclass
class SpreadingBracket:
    c_lower: float
    c_upper: float
    stderr_lower: float
    stderr_upper: float

    def __iter__(self):
        return iter((self.c_lower, self.c_upper))


def spreading_bracket(traj, eps=0.01, burn_in=None):
    """Speeds of the leftmost (p - eps)-crossing and the rightmost eps-crossing."""
    snaps = traj.period_snapshots
    ks = traj.period_indices
    lows, highs, kk = [], [], []
    for k, s in zip(ks, snaps):
        v = s.values
        p = float(v[0])
        try:
            hi = level_crossing(s, eps, "rightmost")
            lo = level_crossing(s, p - eps, "leftmost")
        except LevelRangeError:
            continue
        kk.append(k)
        highs.append(hi)
        lows.append(lo)
    kk = np.array(kk, dtype=int)
    n = len(kk)
    b = default_burn_in(n) if burn_in is None else burn_in
    if n < b + 10:
        raise InsufficientDataError("horizon too short for a spreading bracket")
    up = estimate_speed(LevelTrack(eps, kk, np.array(highs)), traj.period_T, b)
    low = estimate_speed(LevelTrack(-eps, kk, np.array(lows)), traj.period_T, b)
    return SpreadingBracket(low.c, up.c, low.stderr, up.stderr)


# -- randomized suites --------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    n: int
    violations: list

    @property
    def passed(self):
        return self.n > 0 and not self.violations

    def to_dict(self):
        return {"name": self.name, "n": self.n, "violations": self.violations,
                "passed": self.passed}


def random_h2(grid, rng, p0=1.0):
    """Seeded front-like data in [0, p0], equal to p0 far left and 0 far right."""
    from . import pde

    a_minus = rng.uniform(-8.0, -1.0)
    a_plus = rng.uniform(1.0, 8.0)
    if rng.random() < 0.5:
        shape = {"kind": "ramp-bump", "amplitude": rng.uniform(0.1, 0.8),
                 "center": rng.uniform(0.2, 0.8), "width": rng.uniform(0.1, 0.4)}
    else:
        shape = {"kind": "random", "seed": int(rng.integers(2**31)), "n_modes": int(rng.integers(1, 6))}
    return pde.sandwich_ic(grid, a_minus, a_plus, p0, shape)


def random_monotone(grid, rng, width, p0=1.0):
    """p0 (1 - F((x - x0) / width)) with F a random smooth increasing map of [0, 1]."""
    from . import pde

    x0 = rng.uniform(-3.0, 3.0) - 0.5 * width
    s = np.clip((grid.x - x0) / width, 0.0, 1.0)
    w = rng.uniform(0.2, 1.0, 4)
    knots = np.linspace(0.0, 1.0, 5)
    F = np.interp(s, knots, np.concatenate([[0.0], np.cumsum(w) / w.sum()]))
    return pde.Field(grid, 0.0, p0 * (1.0 - F))


def _run(spec, ic, dt, t_end):
    from . import pde

    stride = pde._steps_per_period(spec.period_T, dt)
    return pde.simulate(spec, ic.grid, ic, pde.BoundaryPolicy("platform"), dt, t_end,
                        snapshot_stride=stride)


def zero_number_suite(spec, n_pairs=50, seed=0, grid=None, dt=None, t_end=10.0, max_lag=2,
                      max_shift=10.0, p0=1.0):
    """Z(u1 - u2(. + lag T, . + shift)) must never increase, for random (H2) pairs."""
    from . import pde

    grid = grid or pde.Grid.from_spacing(-40.0, 60.0, 0.1)
    dt = dt or spec.period_T / 100
    rng = np.random.default_rng(seed)
    bad = []
    for j in range(n_pairs):
        u1, u2 = random_h2(grid, rng, p0), random_h2(grid, rng, p0)
        lag = int(rng.integers(0, max_lag + 1))
        shift = grid.dx * int(rng.integers(-int(max_shift / grid.dx), int(max_shift / grid.dx) + 1))
        tr1 = _run(spec, u1, dt, t_end)
        tr2 = _run(spec, u2, dt, t_end + lag * spec.period_T)
        z = zero_number_series(tr1, tr2, shift, lag)
        if not z.non_increasing():
            bad.append({"pair": j, "lag": lag, "shift": shift, "z": z.z.tolist()})
    return SuiteResult("zero-number", n_pairs, bad)


def steepness_suite(spec, n_pairs=25, seed=0, grid=None, dt=None, t_end=10.0, p0=1.0,
                    max_draws=1000):
    """Pairs with initial verdict ``steeper`` must stay steeper (or mutually) at every snapshot."""
    from . import pde

    grid = grid or pde.Grid.from_spacing(-40.0, 60.0, 0.1)
    dt = dt or spec.period_T / 100
    rng = np.random.default_rng(seed)
    bad, n = [], 0
    for _ in range(max_draws):
        if n == n_pairs:
            break
        w1 = rng.uniform(0.5, 4.0)
        v1 = random_monotone(grid, rng, w1, p0)
        v2 = random_monotone(grid, rng, w1 * rng.uniform(2.0, 6.0), p0)
        if is_steeper(v1, v2) != STEEPER:
            continue
        tr1, tr2 = _run(spec, v1, dt, t_end), _run(spec, v2, dt, t_end)
        for s1, s2 in zip(tr1.snapshots, tr2.snapshots):
            verdict = is_steeper(s1, s2)
            if verdict not in (STEEPER, MUTUALLY):
                bad.append({"pair": n, "t": s1.t, "verdict": verdict})
                break
        n += 1
    return SuiteResult("steepness", n, bad)
