"""Command-line front end: TOML scenarios, runs, checks and manifests.

Subcommands::

    terrace-lab ode       --config C.toml [--out DIR]
    terrace-lab simulate  --config C.toml [--out DIR]
    terrace-lab terrace   --config C.toml [--out DIR]
    terrace-lab verify    --config C.toml [--out DIR] [--strict]
    terrace-lab report    [--scenario NAME ...] [--config C.toml ...] [--out DIR] [--jobs N]
    terrace-lab verify-manifest DIR

``TERRACE_LAB_CACHE`` names a directory in which extracted terraces are
kept between runs.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, fronts, odeperiodic, pde, supersub, terrace
from .nonlinearity import NonlinearityError, NonlinearitySpec

log = logging.getLogger("terrace_lab")

SCHEMA = "terrace-lab/1"

DEFAULT_TOLERANCES = {
    "level_tol": fronts.LEVEL_TOL,
    "profile_tol": fronts.PROFILE_TOL,
    "speed_zero_tol": terrace.SPEED_ZERO_TOL,
    "anchor_tol": terrace.ANCHOR_TOL,
    "tail_tol": terrace.TAIL_TOL,
    "snap_tol": terrace.SNAP_TOL,
    "degenerate_tol": odeperiodic.DEGENERATE_TOL,
    "shift_conv_tol": None,  # 1e-3 T
    "residual_tol": 5e-3,
    "residual_tail": 0.25,
    "r2_min": 0.95,
    "cert_tol": None,  # 1e-6 sup|f|
    "eps0_min": 1e-4,
    "speed_rtol": 0.01,
    "half_problem_rtol": 0.02,
    "platform_tol": 1e-4,
    "bracket_sigma": 3.0,
    "spread_eps": 0.01,
    "floquet_rtol": 1e-6,
}

SECTIONS = {
    "schema": None, "name": None, "seed": None,
    "nonlinearity": {"family", "params", "period_T", "base", "du_mode", "h_u"},
    "grid": {"xmin", "xmax", "dx"},
    "ic": {"hypothesis", "kind", "a", "a_minus", "a_plus", "p0", "shape"},
    "run": {"dt", "t_end", "snapshot_stride", "bc", "backend"},
    "analysis": {"levels", "terrace", "checks", "terrace_run", "run_budget", "expect_speeds",
                 "sandwich_a0", "n_zero_pairs", "n_steep_pairs", "suite_t_end", "fm_dc", "fm_K",
                 "fm_window", "fm_horizon", "search_hi"},
    "tolerances": set(DEFAULT_TOLERANCES),
    "output": {"dir"},
}

TERRACE_RUN_KEYS = {"xmin", "xmax", "dx", "dt", "t_end", "a", "p0", "n_phase", "window", "bc",
                    "backend", "refine_waves"}

CHECKS = ("speed", "structure", "minimality", "half-problem", "bracket", "residual", "shift",
          "exponential-rate", "sandwich", "zero-number", "steepness", "certification",
          "floquet")


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """A validated scenario.  ``raw`` keeps the document used for hashing."""

    raw: dict
    spec: NonlinearitySpec
    name: str = "scenario"
    seed: int = 0
    grid: dict = field(default_factory=dict)
    ic: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out_dir: str = "out"

    @property
    def p0(self):
        return float(self.ic.get("p0", 1.0))

    @property
    def config_hash(self):
        return config_hash(self.raw)

    def tol(self, key):
        return self.tolerances[key]

    def checks(self):
        return list(self.analysis.get("checks", []))


def config_hash(raw):
    """SHA-256 of the canonical JSON form (independent of key order)."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _reject_unknown(where, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")


def parse_config(raw):
    """Validate a config mapping and return a :class:`ScenarioConfig`."""
    raw = copy.deepcopy(raw)
    _reject_unknown("top level", raw, SECTIONS)
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}, got {raw.get('schema')!r}")
    for sec, keys in SECTIONS.items():
        if keys is not None and sec in raw:
            if not isinstance(raw[sec], dict):
                raise ConfigError(f"[{sec}] must be a table")
            _reject_unknown(sec, raw[sec], keys)
    if "nonlinearity" not in raw:
        raise ConfigError("missing [nonlinearity]")
    try:
        spec = NonlinearitySpec.from_dict(raw["nonlinearity"])
    except (NonlinearityError, KeyError) as exc:
        raise ConfigError(f"[nonlinearity]: {exc}") from exc
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(raw.get("tolerances", {}))
    if tols["shift_conv_tol"] is None:
        tols["shift_conv_tol"] = 1e-3 * spec.period_T
    if tols["cert_tol"] is None:
        tols["cert_tol"] = supersub.cert_tol(spec, float(raw.get("ic", {}).get("p0", 1.0)))
    analysis = dict(raw.get("analysis", {}))
    _reject_unknown("analysis.terrace_run", analysis.get("terrace_run", {}), TERRACE_RUN_KEYS)
    bad = sorted(set(analysis.get("checks", [])) - set(CHECKS))
    if bad:
        raise ConfigError(f"unknown check(s): {', '.join(bad)}")
    cfg = ScenarioConfig(raw, spec, raw.get("name", "scenario"), int(raw.get("seed", 0)),
                         dict(raw.get("grid", {})), dict(raw.get("ic", {})),
                         dict(raw.get("run", {})), analysis, tols,
                         raw.get("output", {}).get("dir", "out"))
    _validate(cfg)
    return cfg


def _divides(dt, T):
    n = T / dt
    return abs(n - round(n)) < 1e-9 * max(1.0, n)


def _validate(cfg):
    T = cfg.spec.period_T
    dt = cfg.run.get("dt")
    if dt is not None and not _divides(dt, T):
        raise ConfigError(f"dt={dt} does not divide T={T}")
    tr = cfg.analysis.get("terrace_run", {})
    if "dt" in tr and not _divides(tr["dt"], T):
        raise ConfigError(f"terrace_run dt={tr['dt']} does not divide T={T}")
    ic = cfg.ic
    if ic:
        hyp, kind = ic.get("hypothesis"), ic.get("kind")
        shape = ic.get("shape", "linear")
        sname = shape if isinstance(shape, str) else shape.get("kind")
        if hyp not in ("H1", "H2", "H3"):
            raise ConfigError("ic.hypothesis must be H1, H2 or H3")
        if kind not in ("heaviside", "sandwich"):
            raise ConfigError("ic.kind must be 'heaviside' or 'sandwich'")
        if hyp == "H1" and kind != "heaviside":
            raise ConfigError("H1 data must be of kind 'heaviside'")
        if hyp == "H2" and (kind != "sandwich" or sname == "general-H3"):
            raise ConfigError("H2 data must be a sandwich with a shape bounded by [0, p0]")
        if hyp == "H3" and kind != "sandwich":
            raise ConfigError("H3 data must be of kind 'sandwich'")
    for lvl in cfg.analysis.get("levels", []):
        if not 0 < lvl < cfg.p0:
            raise ConfigError(f"level {lvl} outside (0, p0={cfg.p0})")
    if cfg.grid:
        missing = {"xmin", "xmax", "dx"} - set(cfg.grid)
        if missing:
            raise ConfigError(f"[grid] missing {sorted(missing)}")


def load_config(path):
    with open(path, "rb") as fh:
        return parse_config(tomllib.load(fh))


# -- run helpers ----------------------------------------------------------------------

def build_grid(cfg):
    g = cfg.grid
    return pde.Grid.from_spacing(g["xmin"], g["xmax"], g["dx"])


def build_ic(cfg, grid):
    ic = cfg.ic
    if ic["kind"] == "heaviside":
        return pde.heaviside_ic(grid, ic.get("a", 0.0), cfg.p0)
    return pde.sandwich_ic(grid, ic["a_minus"], ic["a_plus"], cfg.p0, ic.get("shape", "linear"))


def run_main(cfg):
    grid = build_grid(cfg)
    dt = cfg.run.get("dt", cfg.spec.period_T / 200)
    stride = cfg.run.get("snapshot_stride") or pde._steps_per_period(cfg.spec.period_T, dt)
    return pde.simulate(cfg.spec, grid, build_ic(cfg, grid),
                        pde.BoundaryPolicy(cfg.run.get("bc", "platform")), dt,
                        cfg.run.get("t_end", 50.0), snapshot_stride=stride,
                        backend=cfg.run.get("backend"), p_max=max(cfg.p0, 1.0))


def terrace_params(cfg):
    p = terrace.default_sim_params(cfg.spec, cfg.p0)
    for key in ("xmin", "xmax", "dx"):
        if key in cfg.grid:
            p[key] = cfg.grid[key]
    for key in ("dt", "t_end", "bc", "backend"):
        if key in cfg.run:
            p[key] = cfg.run[key]
    p.update(cfg.analysis.get("terrace_run", {}))
    return p


def _cache_key(cfg, params):
    doc = {"spec": cfg.spec.to_dict(), "params": params, "version": __version__,
           "snap_tol": cfg.tol("snap_tol"), "budget": cfg.analysis.get("run_budget", 8)}
    return config_hash(doc)[:20]


def get_terrace(cfg, need_trajectory=False):
    """Extract (or load from ``TERRACE_LAB_CACHE``) the terrace of ``cfg``."""
    params = terrace_params(cfg)
    cache = os.environ.get("TERRACE_LAB_CACHE")
    path = None
    if cache:
        path = Path(cache) / f"terrace_{_cache_key(cfg, params)}.json"
        if path.exists() and not need_trajectory:
            ter = terrace.read_terrace_json(path, cfg.spec)
            ladder = odeperiodic.find_periodic_solutions(cfg.spec, (0.0, cfg.p0))
            ter.stability = [odeperiodic.classify_stability(cfg.spec, p, ladder)
                             if p.kind == "point" else None for p in ter.platforms]
            ter.diagnostics["cache"] = str(path)
            return ter
    ter = terrace.extract_terrace(cfg.spec, params, cfg.analysis.get("run_budget", 8),
                                  snap_tol=cfg.tol("snap_tol"))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        ter.write_json(path)
    return ter


# -- outputs and manifest -------------------------------------------------------------

def write_csv(path, header, rows):
    """RFC-4180 CSV with '.' decimals; floats in repr form for bit-stable output."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return Path(path)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    command: str
    code_version: str = __version__
    started: float = field(default_factory=time.time)
    finished: float | None = None
    files: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    status: str = "ok"

    def add(self, path, out_dir):
        p = Path(path)
        self.files.append({"path": str(p.relative_to(out_dir)), "sha256": _sha256(p),
                           "bytes": p.stat().st_size})

    def write(self, out_dir):
        self.finished = time.time()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2))
        return path


def verify_manifest(out_dir):
    """Problems with the files listed in ``out_dir/manifest.json`` (empty if none)."""
    out_dir = Path(out_dir)
    man = json.loads((out_dir / "manifest.json").read_text())
    problems = []
    for entry in man["files"]:
        p = out_dir / entry["path"]
        if not p.exists():
            problems.append(f"missing: {entry['path']}")
        elif _sha256(p) != entry["sha256"]:
            problems.append(f"modified: {entry['path']}")
    return problems


# -- check results --------------------------------------------------------------------

PASS, FAIL, UNMET = "PASS", "FAIL", "UNMET"


@dataclass
class CheckLine:
    check: str
    invariant: str
    status: str
    measured: object = None
    threshold: object = None

    def __str__(self):
        s = f"{self.status} {self.check}: {self.invariant}"
        if self.measured is not None:
            s += f" measured={_fmt(self.measured)}"
        if self.threshold is not None:
            s += f" threshold={_fmt(self.threshold)}"
        return s

    def row(self):
        return [self.check, self.invariant, self.status, _fmt(self.measured), _fmt(self.threshold)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _line(check, invariant, ok, measured=None, threshold=None):
    return CheckLine(check, invariant, PASS if ok else FAIL, measured, threshold)


def hypotheses_met(cfg):
    """Endpoint platforms p and 0 linearly stable (mu > 0)."""
    spec = cfg.spec
    top = odeperiodic.sample_periodic(spec, cfg.p0)
    zero = odeperiodic.sample_periodic(spec, 0.0)
    mus = (odeperiodic.floquet_exponent(spec, top), odeperiodic.floquet_exponent(spec, zero))
    tol = cfg.tol("degenerate_tol")
    return all(m > tol for m in mus), mus


class Context:
    """Lazily computed shared objects of one verify run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._ter = None
        self._traj = None

    @property
    def terrace(self):
        if self._ter is None:
            self._ter = get_terrace(self.cfg)
        return self._ter

    @property
    def traj(self):
        if self._traj is None:
            if self.cfg.ic:
                self._traj = run_main(self.cfg)
            else:
                ter = self.terrace
                if ter.trajectory is None:
                    ter = get_terrace(self.cfg, need_trajectory=True)
                self._traj = ter.trajectory
        return self._traj


def check_speed(ctx):
    cfg = ctx.cfg
    ter = ctx.terrace
    want = cfg.analysis.get("expect_speeds")
    out = []
    if want is None:
        return [CheckLine("speed", "expected speeds given", UNMET)]
    if len(want) != ter.N:
        return [_line("speed", "number of waves", False, ter.N, len(want))]
    for i, (c, w) in enumerate(zip(ter.speeds, want), start=1):
        if w == 0:
            out.append(_line("speed", f"|c{i}| below zero-speed tolerance", abs(c) < cfg.tol("speed_zero_tol"),
                             abs(c), cfg.tol("speed_zero_tol")))
        else:
            err = abs(c - w) / abs(w)
            out.append(_line("speed", f"c{i} relative error vs {w:g}", err <= cfg.tol("speed_rtol"),
                             err, cfg.tol("speed_rtol")))
    return out


def check_structure(ctx):
    cfg = ctx.cfg
    rep = terrace.check_terrace_structure(ctx.terrace, speed_zero_tol=cfg.tol("speed_zero_tol"))
    return [_line("structure", c.name + (f" [wave {c.wave}]" if c.wave else ""), c.passed, c.detail)
            for c in rep.clauses]


def minimality_candidates(cfg, ter, width=20.0, t_end=20.0):
    """Solutions from gentle ramps between each pair of platforms, at a period time."""
    cands = []
    for i, w in enumerate(ter.waves, start=1):
        g = pde.Grid.from_spacing(-60.0, 60.0, w.dx)
        ramp = pde.sandwich_ic(g, -0.5 * width, 0.5 * width, w.upper.q0 - w.lower.q0)
        ic = pde.Field(g, 0.0, ramp.values + w.lower.q0)
        dt = cfg.spec.period_T / 200
        tr = pde.simulate(cfg.spec, g, ic, pde.BoundaryPolicy("platform"), dt, t_end,
                          snapshot_stride=pde._steps_per_period(cfg.spec.period_T, dt))
        cands.append((i, tr.period_snapshots[-1]))
    return cands


def check_minimality(ctx):
    ter = ctx.terrace
    rep = terrace.check_minimality(ter, minimality_candidates(ctx.cfg, ter))
    return [_line("minimality", f"wave {c.wave} steeper than ramp solution", c.passed, c.detail)
            for c in rep.clauses]


def check_half_problem(ctx):
    cfg, ter = ctx.cfg, ctx.terrace
    params = terrace_params(cfg)
    out = []
    for i, w in enumerate(ter.waves, start=1):
        tr = terrace.run_heaviside(cfg.spec, params, w.upper.q0, w.lower.q0)
        mid = 0.5 * (w.upper.q0 + w.lower.q0)
        c_ref = fronts.estimate_speed(fronts.track_levels(tr, [mid], method="quintic")[0],
                                      cfg.spec.period_T).c
        err = abs(w.c - c_ref) / max(abs(c_ref), 1e-12)
        out.append(_line("half-problem", f"c{i} vs single-step oracle {c_ref:.6g}",
                         err <= cfg.tol("half_problem_rtol"), err, cfg.tol("half_problem_rtol")))
    return out


def check_bracket(ctx):
    cfg = ctx.cfg
    ter = ctx.terrace
    traj = ter.trajectory or get_terrace(cfg, need_trajectory=True).trajectory
    br = fronts.spreading_bracket(traj, cfg.tol("spread_eps"))
    k = cfg.tol("bracket_sigma")
    lo = br.c_lower - k * br.stderr_lower
    hi = br.c_upper + k * br.stderr_upper
    levels = cfg.analysis.get("levels") or [0.5 * (w.upper.q0 + w.lower.q0) for w in ter.waves]
    out = []
    for tr in fronts.track_levels(traj, levels, method="quintic"):
        c = fronts.estimate_speed(tr, cfg.spec.period_T).c
        out.append(_line("bracket", f"level {tr.alpha:g} speed inside spreading bracket",
                         lo <= c <= hi, c, [lo, hi]))
    return out


def _shifts(ctx):
    return terrace.fit_shift_functions(ctx.traj, ctx.terrace, ctx.cfg.tol("shift_conv_tol"))


def check_residual(ctx):
    cfg = ctx.cfg
    t, r = terrace.residual_series(ctx.traj, ctx.terrace, _shifts(ctx))
    n_tail = max(2, int(math.ceil(cfg.tol("residual_tail") * len(r))))
    tail = r[-n_tail:]
    return [_line("residual", "final residual with fitted shifts", r[-1] < cfg.tol("residual_tol"),
                  float(r[-1]), cfg.tol("residual_tol")),
            _line("residual", "non-increasing over the last snapshots",
                  bool(np.all(np.diff(tail) <= 0)), float(np.max(np.diff(tail))), 0.0)]


def check_shift(ctx):
    tol = ctx.cfg.tol("shift_conv_tol")
    return [_line("shift", f"eta_{s.wave} converges", s.eta_bar is not None, s.tail_variation, tol)
            for s in _shifts(ctx)]


def check_exponential_rate(ctx):
    cfg = ctx.cfg
    ok, mus = hypotheses_met(cfg)
    if not ok:
        return [CheckLine("exponential-rate", "hypotheses unmet: endpoint platform not linearly stable",
                          UNMET, list(mus), cfg.tol("degenerate_tol"))]
    shifts = _shifts(ctx)
    if any(s.eta_bar is None for s in shifts):
        return [_line("exponential-rate", "limit shifts exist", False,
                      [s.tail_variation for s in shifts], cfg.tol("shift_conv_tol"))]
    t, r = terrace.residual_series(ctx.traj, ctx.terrace, shifts, use_limit=True)
    fit = terrace.exponential_rate(t, r, r2_min=cfg.tol("r2_min"))
    return [_line("exponential-rate", "nu > 0", fit.nu > 0, fit.nu, 0.0),
            _line("exponential-rate", "log-linear r2", fit.r2 >= cfg.tol("r2_min"), fit.r2,
                  cfg.tol("r2_min"))]


def check_sandwich(ctx):
    cfg = ctx.cfg
    ok, mus = hypotheses_met(cfg)
    if not ok:
        return [CheckLine("sandwich", "hypotheses unmet: endpoint platform not linearly stable",
                          UNMET, list(mus), cfg.tol("degenerate_tol"))]
    traj = ctx.traj
    a0 = cfg.analysis.get("sandwich_a0", 10.0)
    g = traj.grid
    runs = []
    for a in (a0, -a0):
        runs.append(pde.simulate(cfg.spec, g, pde.heaviside_ic(g, a, cfg.p0), traj.bc, traj.dt,
                                 traj.snapshots[-1].t,
                                 snapshot_stride=pde._steps_per_period(cfg.spec.period_T, traj.dt),
                                 backend=cfg.run.get("backend"), p_max=max(cfg.p0, 1.0)))
    fit = supersub.sandwich_fit(traj, *runs)
    return [_line("sandwich", "violations decay exponentially", not fit.failed and fit.beta0_hat > 0,
                  fit.beta0_hat, 0.0)]


def check_zero_number(ctx):
    cfg = ctx.cfg
    res = fronts.zero_number_suite(cfg.spec, cfg.analysis.get("n_zero_pairs", 50), cfg.seed,
                                   t_end=cfg.analysis.get("suite_t_end", 10.0), p0=cfg.p0)
    return [_line("zero-number", f"Z non-increasing for {res.n} random pairs", res.passed,
                  len(res.violations), 0)]


def check_steepness(ctx):
    cfg = ctx.cfg
    res = fronts.steepness_suite(cfg.spec, cfg.analysis.get("n_steep_pairs", 25), cfg.seed,
                                 t_end=cfg.analysis.get("suite_t_end", 10.0), p0=cfg.p0)
    return [_line("steepness", f"steepness preserved for {res.n} random pairs", res.passed,
                  len(res.violations), 0)]


def check_certification(ctx):
    cfg = ctx.cfg
    ter = ctx.terrace
    T = cfg.spec.period_T
    tol = cfg.tol("cert_tol")
    out = []
    dc = cfg.analysis.get("fm_dc", 0.1)
    lo, hi = cfg.analysis.get("fm_window", [-50.0, 60.0])
    for i, w in enumerate(ter.waves, start=1):
        g = pde.Grid.from_spacing(lo, hi, w.dx)
        times = np.linspace(0.05 * T, 5 * T, 21)
        eps0, cert = supersub.find_eps0(w, w.c + dc, cfg.spec, g, times,
                                        K=cfg.analysis.get("fm_K", -1.5), tol=tol)
        out.append(_line("certification", f"Fife-McLeod upper, wave {i}, c = c{i} + {dc:g}: eps0",
                         eps0 >= cfg.tol("eps0_min") and cert.certified, eps0, cfg.tol("eps0_min")))
    if cfg.ic:
        traj = ctx.traj
        horizon = min(cfg.analysis.get("fm_horizon", 20.0), traj.snapshots[-1].t)
        u0 = traj.snapshots[0]
        W = supersub.flattening_super(u0, cfg.spec, horizon=horizon)
        times = np.linspace(0.05 * T, horizon, 41)
        cert = supersub.check_comparison(W, cfg.spec, traj.grid, times, tol=tol)
        out.append(_line("certification", "flattening super-solution residual >= -cert_tol",
                         cert.certified, cert.min_residual, -tol))
        sub = pde.Trajectory(traj.spec, traj.grid, traj.bc, traj.dt,
                             [s for s in traj.snapshots if s.t <= horizon + 1e-12])
        ok, worst = supersub.dominates(W, sub)
        out.append(_line("certification", "u <= W at every snapshot", ok, worst, 0.0))
    return out


STABILITY_CATALOG = (
    ("kpp", {}, None), ("bistable-cubic", {"a": 0.25}, None), ("bistable-cubic", {"a": 0.4}, None),
    ("multistable-quintic", {"theta1": 0.2, "q": 0.5, "theta2": 0.8}, None),
    ("multistable-quintic", {"theta1": 0.05, "q": 0.5, "theta2": 0.75, "kappa": 5.0}, None),
    ("combustion", {"theta": 0.3}, None),
    ("time-periodic-product", {"rho": 0.5, "a": 0.3}, "bistable-cubic"),
    ("time-periodic-product", {"rho": 0.8, "a": 0.2}, "bistable-cubic"),
    ("time-periodic-product", {"rho": 0.5}, "kpp"),
    ("time-periodic-product", {"rho": 0.3, "theta1": 0.2, "q": 0.5, "theta2": 0.8},
     "multistable-quintic"),
)


def catalog_specs():
    return [NonlinearitySpec(f, p, 1.0, base=b) for f, p, b in STABILITY_CATALOG]


def floquet_agreement(spec, hi=1.0, rtol=1e-6):
    """(n_points, n_sign_agree, worst relative Floquet mismatch) over the point solutions."""
    sols = odeperiodic.find_periodic_solutions(spec, (0.0, hi))
    n = agree = 0
    worst = 0.0
    for s in sols:
        if s.kind != "point":
            continue
        n += 1
        mu = odeperiodic.floquet_exponent(spec, s)
        dP = odeperiodic.poincare_derivative(spec, s.q0)
        agree += int(np.sign(mu) == np.sign(1.0 - dP))
        floq = math.exp(-mu * spec.period_T)
        worst = max(worst, abs(floq - dP) / abs(dP))
    return n, agree, worst


def check_floquet(ctx):
    rtol = ctx.cfg.tol("floquet_rtol")
    out = []
    for spec in catalog_specs():
        n, agree, worst = floquet_agreement(spec, rtol=rtol)
        label = spec.family + (f"[{spec.base}]" if spec.base else "") + str(dict(spec.params))
        out.append(_line("floquet", f"{label}: mu sign agrees at {agree}/{n} points",
                         n > 0 and agree == n and worst <= rtol, worst, rtol))
    return out


CHECK_FUNCS = {
    "speed": check_speed, "structure": check_structure, "minimality": check_minimality,
    "half-problem": check_half_problem, "bracket": check_bracket, "residual": check_residual,
    "shift": check_shift, "exponential-rate": check_exponential_rate, "sandwich": check_sandwich,
    "zero-number": check_zero_number, "steepness": check_steepness,
    "certification": check_certification, "floquet": check_floquet,
}


# -- commands -------------------------------------------------------------------------

def _out_dir(cfg, out):
    d = Path(out or cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_ode(cfg, out=None):
    out_dir = _out_dir(cfg, out)
    man = RunManifest(cfg.config_hash, "ode")
    hi = cfg.analysis.get("search_hi", max(cfg.p0, 1.0))
    try:
        sols = odeperiodic.find_periodic_solutions(cfg.spec, (0.0, hi))
    except odeperiodic.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.status = "diverged"
        man.write(out_dir)
        return 2
    rows, docs = [], []
    for s in sols:
        rec = odeperiodic.classify_stability(cfg.spec, s, sols)
        lo, hi_ = s.band if s.kind == "interval" else (s.q0, s.q0)
        verdict = "stable" if rec.mu > cfg.tol("degenerate_tol") else (
            "unstable" if rec.mu < -cfg.tol("degenerate_tol") else "degenerate")
        rows.append([s.kind, float(s.q0), float(lo), float(hi_), float(rec.mu), verdict])
        docs.append({"solution": s.to_dict(), "stability": rec.to_dict(), "verdict": verdict})
        print(f"{s.kind:8s} q0={s.q0:.6g} band=[{lo:.6g}, {hi_:.6g}] mu={rec.mu:.6g} {verdict}")
    man.add(write_csv(out_dir / "ode.csv", ["kind", "q0", "lo", "hi", "mu", "verdict"], rows), out_dir)
    p = out_dir / "ode.json"
    p.write_text(json.dumps(terrace._jsonable(docs), indent=2))
    man.add(p, out_dir)
    man.write(out_dir)
    return 0


def cmd_simulate(cfg, out=None):
    out_dir = _out_dir(cfg, out)
    man = RunManifest(cfg.config_hash, "simulate")
    try:
        traj = run_main(cfg)
    except pde.BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.status = "blow-up (partial outputs)"
        man.write(out_dir)
        return 2
    for p in traj.write_csv(out_dir / "snapshots"):
        man.add(p, out_dir)
    man.add(traj.write_columnar(out_dir / "trajectory.trl"), out_dir)
    levels = cfg.analysis.get("levels", [])
    if levels:
        rows = []
        for tr in fronts.track_levels(traj, levels):
            rows.extend([tr.alpha, int(k), float(a)] for k, a in zip(tr.k, tr.a))
            try:
                est = fronts.estimate_speed(tr, cfg.spec.period_T)
                print(f"level {tr.alpha:g}: c = {est.c:.6g} +/- {est.stderr:.2g}")
            except fronts.InsufficientDataError as exc:
                print(f"level {tr.alpha:g}: {exc}")
        man.add(write_csv(out_dir / "levels.csv", ["alpha", "k", "a"], rows), out_dir)
    man.write(out_dir)
    return 0


def cmd_terrace(cfg, out=None):
    out_dir = _out_dir(cfg, out)
    man = RunManifest(cfg.config_hash, "terrace")
    try:
        ter = get_terrace(cfg)
    except terrace.PartialTerraceError as exc:
        p = out_dir / "terrace_progress.json"
        p.write_text(json.dumps(terrace._jsonable(exc.progress), indent=2))
        man.add(p, out_dir)
        man.status = "partial terrace"
        man.write(out_dir)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for p in ter.write_json(out_dir / "terrace.json"):
        man.add(p, out_dir)
    ctx = Context(cfg)
    ctx._ter = ter
    lines = check_structure(ctx) + check_minimality(ctx)
    for i, (c, s) in enumerate(zip(ter.speeds, ter.stderrs), start=1):
        print(f"wave {i}: {ter.platforms[i - 1].q0:.6g} -> {ter.platforms[i].q0:.6g}, "
              f"c = {c:.6g} +/- {s:.2g}")
    return _finish(lines, man, out_dir, strict=False)


def _finish(lines, man, out_dir, strict):
    for ln in lines:
        print(ln)
    man.add(write_csv(Path(out_dir) / "checks.csv",
                      ["check", "invariant", "status", "measured", "threshold"],
                      [ln.row() for ln in lines]), out_dir)
    man.checks = {f"{ln.check}: {ln.invariant}": ln.status for ln in lines}
    failed = [ln for ln in lines if ln.status == FAIL or (strict and ln.status == UNMET)]
    man.status = "failed" if failed else "ok"
    man.write(out_dir)
    if failed:
        print(f"{len(failed)} check(s) failed:", file=sys.stderr)
        for ln in failed:
            print(f"  {ln.check}: {ln.invariant}", file=sys.stderr)
        return 1
    return 0


def run_checks(cfg, names=None):
    ctx = Context(cfg)
    lines = []
    for name in names or cfg.checks():
        try:
            lines.extend(CHECK_FUNCS[name](ctx))
        except (ValueError, RuntimeError) as exc:
            lines.append(CheckLine(name, f"error: {exc}", FAIL))
    return lines


def cmd_verify(cfg, out=None, strict=False):
    out_dir = _out_dir(cfg, out)
    man = RunManifest(cfg.config_hash, "verify")
    return _finish(run_checks(cfg), man, out_dir, strict)


# -- scenario registry ----------------------------------------------------------------

def _scenario(name, nonlin, checks, grid=None, ic=None, run=None, **analysis):
    doc = {"schema": SCHEMA, "name": name, "seed": 0, "nonlinearity": nonlin,
           "analysis": dict(analysis, checks=list(checks))}
    if grid:
        doc["grid"] = grid
    if ic:
        doc["ic"] = ic
    if run:
        doc["run"] = run
    return doc


_BISTABLE = {"family": "bistable-cubic", "params": {"a": 0.25}}
_QUINTIC = {"family": "multistable-quintic",
            "params": {"theta1": 0.05, "q": 0.5, "theta2": 0.75, "kappa": 5.0}}
_PRODUCT = {"family": "time-periodic-product", "base": "bistable-cubic",
            "params": {"a": 0.3, "rho": 0.5}}
_H3 = {"hypothesis": "H3", "kind": "sandwich", "a_minus": -5.0, "a_plus": 5.0, "p0": 1.0,
       "shape": {"kind": "general-H3", "left": 0.9, "right": 0.05, "amplitude": 0.05,
                 "wavelength": 4.0, "bump": 0.2}}
_RUN1 = {"xmin": -150.0, "xmax": 250.0, "dx": 0.05, "dt": 0.005, "t_end": 200.0}
_RUN3 = {"xmin": -80.0, "xmax": 200.0, "dx": 0.05, "dt": 0.005, "t_end": 200.0}

SCENARIOS = {
    "bistable-speed": _scenario("bistable-speed", _BISTABLE, ["speed", "structure", "minimality"],
                                terrace_run=_RUN1, expect_speeds=[0.353553]),
    "balanced-bistable": _scenario("balanced-bistable", {"family": "bistable-cubic",
                                                         "params": {"a": 0.5}},
                                   ["speed", "structure"],
                                   terrace_run=dict(_RUN1, t_end=100.0), expect_speeds=[0.0]),
    "quintic-terrace": _scenario(
        "quintic-terrace", _QUINTIC,
        ["structure", "half-problem", "residual", "bracket"],
        grid={k: _RUN3[k] for k in ("xmin", "xmax", "dx")},
        ic={"hypothesis": "H1", "kind": "heaviside", "a": 0.0, "p0": 1.0},
        run={"dt": 0.005, "t_end": 200.0}, terrace_run=_RUN3),
    "zero-number": _scenario("zero-number", _PRODUCT, ["zero-number"]),
    "steepness": _scenario("steepness", {"family": "bistable-cubic", "params": {"a": 0.3}},
                           ["steepness"]),
    "exponential-rate": _scenario(
        "exponential-rate", _PRODUCT, ["exponential-rate", "sandwich", "residual", "shift"],
        grid={"xmin": -60.0, "xmax": 140.0, "dx": 0.05}, ic=_H3,
        run={"dt": 0.005, "t_end": 60.0},
        terrace_run={"xmin": -60.0, "xmax": 140.0, "dx": 0.05, "dt": 0.005, "t_end": 150.0}),
    "certification": _scenario(
        "certification", _BISTABLE, ["certification"],
        grid={"xmin": -60.0, "xmax": 100.0, "dx": 0.1}, ic=_H3,
        run={"dt": 0.005, "t_end": 20.0}, terrace_run=_RUN1),
    "stability-catalog": _scenario("stability-catalog", _BISTABLE, ["floquet"]),
    "kpp-negative-control": _scenario(
        "kpp-negative-control", {"family": "kpp"}, ["exponential-rate"],
        grid={"xmin": -60.0, "xmax": 140.0, "dx": 0.05},
        ic={"hypothesis": "H1", "kind": "heaviside", "a": 0.0, "p0": 1.0},
        run={"dt": 0.005, "t_end": 40.0}),
}


def scenario_config(name):
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    return parse_config(SCENARIOS[name])


def _run_scenario(item):
    raw, out_dir = item
    cfg = parse_config(raw)
    d = Path(out_dir) / cfg.name
    d.mkdir(parents=True, exist_ok=True)
    lines = run_checks(cfg)
    man = RunManifest(cfg.config_hash, "report")
    man.add(write_csv(d / "checks.csv", ["check", "invariant", "status", "measured", "threshold"],
                      [ln.row() for ln in lines]), d)
    man.checks = {f"{ln.check}: {ln.invariant}": ln.status for ln in lines}
    man.status = "failed" if any(ln.status == FAIL for ln in lines) else "ok"
    man.write(d)
    return cfg.name, lines


def cmd_report(raws, out, jobs=1, strict=False):
    """Run several scenarios (in parallel up to ``jobs``) and tabulate their checks."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = [(r, str(out_dir)) for r in raws]
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_scenario, items))
    else:
        results = [_run_scenario(it) for it in items]
    rows = []
    bad = 0
    for name, lines in results:
        for ln in lines:
            print(f"[{name}] {ln}")
            rows.append([name] + ln.row())
            bad += ln.status == FAIL or (strict and ln.status == UNMET)
    man = RunManifest(config_hash([r for r, _ in items]), "report")
    man.add(write_csv(out_dir / "report.csv",
                      ["scenario", "check", "invariant", "status", "measured", "threshold"], rows),
            out_dir)
    for name, _ in results:
        man.add(out_dir / name / "checks.csv", out_dir)
        man.add(out_dir / name / "manifest.json", out_dir)
    man.status = "failed" if bad else "ok"
    man.write(out_dir)
    return 1 if bad else 0


# -- entry point ----------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="terrace-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("ode", "simulate", "terrace", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML scenario file")
        p.add_argument("--scenario", help="registered scenario name instead of --config")
        p.add_argument("--out", help="output directory (default: [output] dir)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--strict", action="store_true", help="treat unmet hypotheses as failures")
    p = sub.add_parser("report")
    p.add_argument("--config", action="append", default=[])
    p.add_argument("--scenario", action="append", default=[])
    p.add_argument("--list", action="store_true", help="list registered scenarios and exit")
    p.add_argument("--out", default="report")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true")
    p = sub.add_parser("verify-manifest")
    p.add_argument("dir")
    return ap


def _single_config(args):
    if bool(args.config) == bool(args.scenario):
        raise ConfigError("give exactly one of --config or --scenario")
    return load_config(args.config) if args.config else scenario_config(args.scenario)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "verify-manifest":
            problems = verify_manifest(args.dir)
            for p in problems:
                print(p)
            print("manifest ok" if not problems else f"{len(problems)} problem(s)")
            return 1 if problems else 0
        if args.command == "report":
            if args.list:
                for name in SCENARIOS:
                    print(name)
                return 0
            raws = []
            for path in args.config:
                with open(path, "rb") as fh:
                    raws.append(tomllib.load(fh))
            names = args.scenario or ([] if args.config else list(SCENARIOS))
            raws.extend(SCENARIOS[n] if n in SCENARIOS else scenario_config(n).raw for n in names)
            for r in raws:
                parse_config(r)
            return cmd_report(raws, args.out, args.jobs, args.strict)
        cfg = _single_config(args)
        if args.command == "ode":
            return cmd_ode(cfg, args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "terrace":
            return cmd_terrace(cfg, args.out)
        return cmd_verify(cfg, args.out, args.strict)
    except (ConfigError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
