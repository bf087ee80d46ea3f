"""Finite-difference IMEX integrator for u_t = u_xx + f(t, u) on a truncated line.

One step is a Strang splitting: an explicit midpoint (RK2) reaction half-step,
a backward-Euler diffusion step with the standard three-point Laplacian
(solved by the Thomas algorithm), and a second reaction half-step.  Backward
Euler keeps the diffusion matrix an M-matrix with a totally positive inverse,
so the discrete scheme inherits the comparison principle and the
non-increase of the number of sign changes.
"""
from __future__ import annotations

import json
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .nonlinearity import NonlinearitySpec

log = logging.getLogger(__name__)

TRL_MAGIC = b"TRL1"


class BlowUpError(RuntimeError):
    """The discrete solution stopped being finite."""

    def __init__(self, index, t):
        super().__init__(f"non-finite value at grid index {index} near t={t:g}")
        self.index = index
        self.t = t


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    xmin: float
    xmax: float
    n_x: int

    def __post_init__(self):
        if self.n_x < 16:
            raise ValueError("grid needs at least 16 points")
        if not self.xmax > self.xmin:
            raise ValueError("xmax must exceed xmin")

    @classmethod
    def from_spacing(cls, xmin, xmax, dx):
        n = int(round((xmax - xmin) / dx)) + 1
        return cls(float(xmin), float(xmin + (n - 1) * dx), n)

    @property
    def dx(self):
        return (self.xmax - self.xmin) / (self.n_x - 1)

    @property
    def x(self):
        return np.linspace(self.xmin, self.xmax, self.n_x)

    def shifted(self, cells):
        """The same grid translated by a whole number of cells."""
        d = cells * self.dx
        return Grid(self.xmin + d, self.xmax + d, self.n_x)

    def index_of(self, x):
        return int(round((x - self.xmin) / self.dx))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    t: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_x,):
            raise ValueError(f"expected {self.grid.n_x} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self):
        return self.grid.x


@dataclass(frozen=True)
class BoundaryPolicy:
    """How the two end nodes of the truncated domain behave.

    ``platform``
        End nodes carry no diffusion and follow the spatially homogeneous
        ODE h' = f(t, h); from a left value p(0) this tracks p(t), from 0 it
        stays at 0.
    ``dirichlet``
        End nodes frozen at their initial values.
    ``neumann``
        Zero-flux ends (reflecting ghost nodes).
    """

    kind: str = "platform"

    def __post_init__(self):
        if self.kind not in ("platform", "dirichlet", "neumann"):
            raise ValueError(f"unknown boundary policy {self.kind!r}")

    @property
    def mode(self):
        return {"platform": 0, "dirichlet": 1, "neumann": 2}[self.kind]


PLATFORM = BoundaryPolicy("platform")


def diffusion_bands(n, lam, bc):
    """Bands of I - lam * D2 with the boundary rows set by ``bc``."""
    lower = np.full(n, -lam)
    upper = np.full(n, -lam)
    diag = np.full(n, 1.0 + 2.0 * lam)
    if bc.kind == "neumann":
        upper[0] = -2.0 * lam
        lower[n - 1] = -2.0 * lam
    else:
        diag[0] = diag[n - 1] = 1.0
        upper[0] = lower[n - 1] = 0.0
    lower[0] = 0.0
    upper[n - 1] = 0.0
    return lower, diag, upper


def monotone_dt(spec, p_max=1.0):
    """Largest dt keeping the reaction substep order preserving."""
    lip = spec.sup_abs_du(-0.1, 1.1 * p_max)
    return math.inf if lip == 0 else 0.5 / lip


# -- initial data -----------------------------------------------------------------

def _check_jump(grid, a, strict):
    margin = 10 * grid.dx
    if a < grid.xmin or a > grid.xmax:
        msg = f"jump location {a:g} outside [{grid.xmin:g}, {grid.xmax:g}]"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, BoundaryWarning, stacklevel=3)
    elif a - grid.xmin < margin or grid.xmax - a < margin:
        warnings.warn(f"jump location {a:g} within 10 cells of a boundary", BoundaryWarning,
                      stacklevel=3)


def heaviside_ic(grid, a, p0, strict=False):
    """p0 * H(a - x), the jump snapped to the nearest grid point."""
    _check_jump(grid, a, strict)
    j = grid.index_of(a)
    idx = np.arange(grid.n_x)
    return Field(grid, 0.0, np.where(idx <= j, float(p0), 0.0))


def _bump(z):
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


def sandwich_ic(grid, a_minus, a_plus, p0, shape="linear"):
    """Initial data equal to p0 left of ``a_minus`` and 0 right of ``a_plus``.

    ``shape`` selects the profile in between:

    * ``"linear"`` -- a monotone ramp;
    * ``{"kind": "ramp-bump", "amplitude": A, "center": s, "width": w}`` -- the
      ramp plus a bump of height ``A * p0`` centred at the fraction ``s`` of
      the gap, clipped into [0, p0];
    * ``{"kind": "random", "seed": k, "n_modes": m}`` -- ramp plus a seeded
      random sine series, clipped into [0, p0];
    * ``{"kind": "general-H3", "left": l, "right": r, "amplitude": A,
      "wavelength": L, "bump": B}`` -- not clipped: oscillates around ``l``
      on the left and decays from ``r`` on the right, with an optional bump
      of height ``B`` in the gap.  Used for front-like data beyond (H2).
    """
    if not a_minus < a_plus:
        raise ValueError("a_minus must be smaller than a_plus")
    x = grid.x
    s = np.clip((x - a_minus) / (a_plus - a_minus), 0.0, 1.0)
    ramp = p0 * (1.0 - s)
    kind = shape if isinstance(shape, str) else shape.get("kind")
    opts = {} if isinstance(shape, str) else shape
    if kind == "linear":
        vals = ramp
    elif kind == "ramp-bump":
        amp = opts.get("amplitude", 0.4)
        center = opts.get("center", 0.6)
        width = opts.get("width", 0.3)
        vals = np.clip(ramp + amp * p0 * _bump((s - center) / width) * (s > 0) * (s < 1), 0.0, p0)
    elif kind == "random":
        rng = np.random.default_rng(opts.get("seed", 0))
        m = opts.get("n_modes", 4)
        amps = rng.uniform(-0.6, 0.6, m) * p0
        series = sum(amps[k] * np.sin((k + 1) * np.pi * s) for k in range(m))
        vals = np.clip(ramp + series, 0.0, p0)
    elif kind == "general-H3":
        left = opts.get("left", p0)
        right = opts.get("right", 0.0)
        amp = opts.get("amplitude", 0.0)
        wavelength = opts.get("wavelength", 5.0)
        bump = opts.get("bump", 0.0)
        osc = amp * np.sin(2 * np.pi * x / wavelength)
        lhs = left + osc
        rhs = (right + osc) * np.exp(-np.maximum(x - a_plus, 0.0) / wavelength)
        vals = (1.0 - s) * lhs + s * rhs
        vals = vals + bump * _bump(2.0 * s - 1.0)
    else:
        raise ValueError(f"unknown shape {kind!r}")
    return Field(grid, 0.0, vals)


# -- time stepping --------------------------------------------------------------

def step(field, spec, dt, bc=PLATFORM, backend=None):
    """One Strang step of size ``dt`` from ``field``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    lam = dt / field.grid.dx**2
    bands = diffusion_bands(field.grid.n_x, lam, bc)
    u = np.array(field.values)
    bad = _backend.advance(u, 1, field.t, dt, spec, *bands, bc.mode, backend=backend)
    if bad >= 0:
        raise BlowUpError(bad, field.t + dt)
    return Field(field.grid, field.t + dt, u)


@dataclass(eq=False)
class Trajectory:
    """Snapshots of one PDE run.

    ``snapshots`` holds every stored field in time order; the sub-list at
    integer multiples of the period is exposed as ``period_snapshots``.
    """

    spec: NonlinearitySpec
    grid: Grid
    bc: BoundaryPolicy
    dt: float
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def period_T(self):
        return self.spec.period_T

    def is_period_time(self, t):
        k = t / self.period_T
        return abs(k - round(k)) < 1e-9

    @property
    def period_snapshots(self):
        return [s for s in self.snapshots if self.is_period_time(s.t)]

    @property
    def period_indices(self):
        return np.array([int(round(s.t / self.period_T)) for s in self.period_snapshots])

    def last_period_phases(self):
        """Snapshots covering [K T, (K+1) T) for the last complete period start K."""
        ps = self.period_snapshots
        if len(ps) < 2:
            raise ValueError("need at least two period snapshots")
        t0 = ps[-2].t
        return [s for s in self.snapshots if t0 - 1e-12 <= s.t < ps[-1].t - 1e-12]

    # -- export -------------------------------------------------------------
    def write_csv(self, out_dir, prefix="snap"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        index = {
            "spec": self.spec.to_dict(),
            "grid": {"xmin": self.grid.xmin, "xmax": self.grid.xmax, "n_x": self.grid.n_x},
            "bc": self.bc.kind,
            "dt": self.dt,
            "snapshots": [],
        }
        files = []
        for i, snap in enumerate(self.snapshots):
            name = f"{prefix}_{i:05d}.csv"
            np.savetxt(out / name, np.column_stack([snap.x, snap.values]), delimiter=",",
                       header="x,u", comments="", fmt="%.17g")
            index["snapshots"].append({"file": name, "t": snap.t,
                                       "period": self.is_period_time(snap.t)})
            files.append(out / name)
        (out / f"{prefix}_index.json").write_text(json.dumps(index, indent=2))
        files.append(out / f"{prefix}_index.json")
        return files

    def write_columnar(self, path):
        """Little-endian dump: b"TRL1", n_x, n_snapshots (uint64), then per
        snapshot t, xmin, dx followed by n_x values, all float64."""
        return dump_columnar(path, ((s.t, s.grid.xmin, s.grid.dx, s.values)
                                    for s in self.snapshots), self.grid.n_x)

    @classmethod
    def read_columnar(cls, path, spec, bc=PLATFORM, dt=float("nan")):
        raw = Path(path).read_bytes()
        if raw[:4] != TRL_MAGIC:
            raise ValueError("not a TRL1 file")
        n_x, n_snap = struct.unpack_from("<QQ", raw, 4)
        off = 20
        snaps = []
        for _ in range(n_snap):
            t, xmin, dx = struct.unpack_from("<ddd", raw, off)
            off += 24
            vals = np.frombuffer(raw, dtype="<f8", count=n_x, offset=off)
            off += 8 * n_x
            snaps.append(Field(Grid(xmin, xmin + (n_x - 1) * dx, n_x), t, vals))
        return cls(spec, snaps[0].grid, bc, dt, snaps)


def dump_columnar(path, rows, n_x):
    """Write ``(t, xmin, dx, values)`` rows in the TRL1 layout."""
    rows = list(rows)
    with open(path, "wb") as fh:
        fh.write(TRL_MAGIC)
        fh.write(struct.pack("<QQ", n_x, len(rows)))
        for t, xmin, dx, values in rows:
            vals = np.asarray(values, dtype="<f8")
            if vals.shape != (n_x,):
                raise ValueError("row length does not match n_x")
            fh.write(struct.pack("<ddd", t, xmin, dx))
            fh.write(vals.tobytes())
    return Path(path)


def _steps_per_period(T, dt):
    n = T / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"dt={dt:g} does not divide the period T={T:g}")
    return int(round(n))


def simulate(spec, grid, ic, bc=PLATFORM, dt=None, t_end=10.0, snapshot_stride=0, *,
             stride_from=0.0, moving_window=None, backend=None, p_max=None):
    """Integrate from ``ic`` up to ``t_end``.

    Parameters
    ----------
    dt : float, optional
        Must divide the period; defaults to T/200.
    snapshot_stride : int
        Store a snapshot every this many steps (0 stores only t = kT),
        restricted to ``t >= stride_from``.
    moving_window : dict, optional
        ``{"level": alpha, "margin": m}`` shifts the grid right by whole
        cells whenever the rightmost ``alpha``-crossing comes within ``m``
        of the right end.  New cells copy the right boundary value.

    Returns
    -------
    Trajectory
        Snapshots at t = 0, every t = kT, and on the stride.
    """
    T = spec.period_T
    dt = T / 200 if dt is None else float(dt)
    n_per = _steps_per_period(T, dt)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    pm = p_max if p_max is not None else max(1.0, float(np.max(np.abs(ic.values))))
    if dt > monotone_dt(spec, pm):
        log.warning("dt=%g exceeds the monotone bound %g", dt, monotone_dt(spec, pm))
    n_total = int(round(t_end / dt))
    lam = dt / grid.dx**2
    bands = diffusion_bands(grid.n_x, lam, bc)
    u = np.array(ic.values, dtype=float)
    cur_grid = ic.grid
    traj = Trajectory(spec, grid, bc, dt, [Field(cur_grid, 0.0, u.copy())],
                      meta={"backend": backend or _backend.DEFAULT})
    stride = int(snapshot_stride or 0)
    first_stride = int(math.ceil(stride_from / dt - 1e-9)) if stride else None
    done = 0
    shifts = 0
    while done < n_total:
        nxt = min(n_total, (done // n_per + 1) * n_per)
        if stride:
            cand = max(first_stride, (done // stride + 1) * stride)
            if cand > done:
                nxt = min(nxt, cand)
        bad = _backend.advance(u, nxt - done, done * dt, dt, spec, *bands, bc.mode,
                               backend=backend)
        if bad >= 0:
            raise BlowUpError(bad, nxt * dt)
        done = nxt
        if done % n_per == 0:
            t = (done // n_per) * T
        else:
            t = done * dt
        if moving_window is not None:
            m = _window_shift(u, cur_grid, moving_window)
            if m:
                u[:-m] = u[m:].copy()
                u[-m:] = u[-1]
                cur_grid = cur_grid.shifted(m)
                shifts += m
        store = done % n_per == 0 or done == n_total
        if stride and done >= first_stride and done % stride == 0:
            store = True
        if store:
            traj.snapshots.append(Field(cur_grid, t, u.copy()))
    traj.meta["window_shift_cells"] = shifts
    return traj


def _window_shift(u, grid, opts):
    level = opts.get("level", 0.5 * float(u[0]))
    margin = opts.get("margin", 50.0)
    above = np.flatnonzero(u > level)
    if above.size == 0:
        return 0
    front_x = grid.xmin + above[-1] * grid.dx
    gap = grid.xmax - front_x
    if gap >= margin:
        return 0
    return int(math.ceil((margin - gap) / grid.dx))
