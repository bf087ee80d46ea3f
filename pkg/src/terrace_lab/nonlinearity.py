"""Reaction terms f(t, u) for u_t = u_xx + f(t, u).

Every family is T-periodic in t and satisfies f(t, 0) = 0.  The catalog:

============================  ==============================================
``kpp``                       u (1 - u)
``bistable-cubic``            u (1 - u) (u - a)
``multistable-quintic``       kappa u (u - theta1)(u - q)(u - theta2)(1 - u)
``combustion``                0 on [0, theta], (u - theta)(p - u) above
``time-periodic-product``     (1 + rho sin(2 pi t / T)) * base(u)
``custom-polynomial``         sum_jk c_jk u^j phi_k(t), phi = (1, sin, cos)
============================  ==============================================

Custom-polynomial coefficients are named ``c{j}_{k}`` with ``k`` in
{0, 1, 2} selecting (1, sin(2 pi t/T), cos(2 pi t/T)); ``j`` must be >= 1.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import integrate

FAMILIES = (
    "kpp",
    "bistable-cubic",
    "multistable-quintic",
    "combustion",
    "time-periodic-product",
    "custom-polynomial",
)
AUTONOMOUS_BASES = ("kpp", "bistable-cubic", "multistable-quintic", "combustion")

# integer codes shared with the compiled kernel
KERNEL_CODES = {
    "kpp": 1,
    "bistable-cubic": 2,
    "multistable-quintic": 3,
    "combustion": 4,
    "custom-polynomial": 5,
}

_DEFAULTS = {
    "kpp": {},
    "bistable-cubic": {"a": 0.25},
    "multistable-quintic": {"kappa": 1.0, "theta1": 0.2, "q": 0.5, "theta2": 0.8},
    "combustion": {"theta": 0.3, "p": 1.0},
}

FD_STEP = 1e-6
_COEF_RE = re.compile(r"^c(\d+)_([012])$")


class NonlinearityError(ValueError):
    """Invalid reaction-term specification or evaluation request."""


def _base_params(family, params):
    allowed = _DEFAULTS[family]
    unknown = set(params) - set(allowed)
    if unknown:
        raise NonlinearityError(f"unknown parameters for {family}: {sorted(unknown)}")
    merged = dict(allowed)
    merged.update({k: float(v) for k, v in params.items()})
    return merged


@dataclass(frozen=True)
class NonlinearitySpec:
    """Immutable description of a reaction term.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    params : mapping of str to float
        Named coefficients; missing catalog parameters take defaults.
        For ``time-periodic-product`` the keys are ``rho`` plus the
        parameters of the base family.
    period_T : float
        Period in t.  Autonomous families still carry one; it sets the
        Poincare map and the snapshot cadence.
    base : str, optional
        Autonomous family modulated by ``time-periodic-product``.
    du_mode : {"analytic", "finite-difference"}
    h_u : float
        Step for the finite-difference derivative.
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    period_T: float = 1.0
    base: str | None = None
    du_mode: str = "analytic"
    h_u: float = FD_STEP

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise NonlinearityError(f"unknown family {self.family!r}")
        if not (self.period_T > 0 and math.isfinite(self.period_T)):
            raise NonlinearityError("period_T must be positive and finite")
        if self.du_mode not in ("analytic", "finite-difference"):
            raise NonlinearityError(f"unknown du_mode {self.du_mode!r}")
        params = dict(self.params)
        if self.family == "time-periodic-product":
            base = self.base or "bistable-cubic"
            if base not in AUTONOMOUS_BASES:
                raise NonlinearityError(f"base must be one of {AUTONOMOUS_BASES}")
            object.__setattr__(self, "base", base)
            rho = float(params.pop("rho", 0.5))
            if abs(rho) >= 1:
                raise NonlinearityError("|rho| must be < 1 so that b(t) > 0")
            merged = _base_params(base, params)
            merged["rho"] = rho
        elif self.family == "custom-polynomial":
            if self.base is not None:
                raise NonlinearityError("base is only meaningful for time-periodic-product")
            merged = {}
            for key, val in params.items():
                m = _COEF_RE.match(key)
                if m is None:
                    raise NonlinearityError(f"bad polynomial coefficient name {key!r}")
                if int(m.group(1)) == 0 and float(val) != 0.0:
                    raise NonlinearityError("f(t,0)=0 requires no u^0 terms")
                merged[key] = float(val)
        else:
            if self.base is not None:
                raise NonlinearityError("base is only meaningful for time-periodic-product")
            merged = _base_params(self.family, params)
        for key, val in merged.items():
            if not math.isfinite(val):
                raise NonlinearityError(f"parameter {key} is not finite")
        object.__setattr__(self, "params", MappingProxyType(merged))
        if self.family == "custom-polynomial":
            object.__setattr__(self, "_poly", self._poly_matrix())

    # -- construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, period_T=1.0):
        """The reaction term f = 0 (pure heat equation)."""
        return cls("custom-polynomial", {}, period_T)

    def _poly_matrix(self):
        degree = 0
        for key in self.params:
            degree = max(degree, int(_COEF_RE.match(key).group(1)))
        coef = np.zeros((degree + 1, 3))
        for key, val in self.params.items():
            m = _COEF_RE.match(key)
            coef[int(m.group(1)), int(m.group(2))] = val
        return coef

    @property
    def autonomous(self):
        if self.family == "time-periodic-product":
            return self.params["rho"] == 0.0
        if self.family == "custom-polynomial":
            return not np.any(self._poly[:, 1:])
        return True

    # -- evaluation -----------------------------------------------------------
    def _omega_t(self, t):
        return 2.0 * np.pi * np.asarray(t, dtype=float) / self.period_T

    def _autonomous_value(self, family, u):
        p = self.params
        if family == "kpp":
            return u * (1.0 - u)
        if family == "bistable-cubic":
            return u * (1.0 - u) * (u - p["a"])
        if family == "multistable-quintic":
            return p["kappa"] * u * (u - p["theta1"]) * (u - p["q"]) * (u - p["theta2"]) * (1.0 - u)
        if family == "combustion":
            th = p["theta"]
            return np.where(u > th, (u - th) * (p["p"] - u), 0.0)
        raise AssertionError(family)

    def _autonomous_du(self, family, u):
        p = self.params
        if family == "kpp":
            return 1.0 - 2.0 * u
        if family == "bistable-cubic":
            a = p["a"]
            # u(1-u)(u-a) = -u^3 + (1+a)u^2 - a u
            return -3.0 * u * u + 2.0 * (1.0 + a) * u - a
        if family == "multistable-quintic":
            roots = (0.0, p["theta1"], p["q"], p["theta2"], 1.0)
            poly = np.poly1d(roots, r=True) * (-p["kappa"])
            return np.polyval(np.polyder(poly.coeffs), u)
        if family == "combustion":
            th = p["theta"]
            return np.where(u > th, p["p"] + th - 2.0 * u, 0.0)
        raise AssertionError(family)

    def _time_factor(self, t):
        return 1.0 + self.params["rho"] * np.sin(self._omega_t(t))

    def _poly_eval(self, coef, t, u):
        w = self._omega_t(t)
        s, c = np.sin(w), np.cos(w)
        out = np.zeros(np.broadcast(w, u).shape)
        for j in range(len(coef) - 1, -1, -1):
            out = out * u + (coef[j, 0] + coef[j, 1] * s + coef[j, 2] * c)
        return out

    def eval(self, t, u):
        """Return f(t, u); broadcasts over array arguments."""
        u_arr = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u_arr)):
            raise NonlinearityError("non-finite state value")
        if self.family == "time-periodic-product":
            out = self._time_factor(t) * self._autonomous_value(self.base, u_arr)
        elif self.family == "custom-polynomial":
            out = self._poly_eval(self._poly, t, u_arr)
        else:
            out = self._autonomous_value(self.family, u_arr)
        out = np.broadcast_to(out, np.broadcast(np.asarray(t, dtype=float), u_arr).shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def eval_du(self, t, u):
        """Return the u-derivative of f at (t, u)."""
        u_arr = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u_arr)):
            raise NonlinearityError("non-finite state value")
        if self.du_mode == "finite-difference":
            h = self.h_u
            out = (np.asarray(self.eval(t, u_arr + h)) - np.asarray(self.eval(t, u_arr - h))) / (2 * h)
        elif self.family == "time-periodic-product":
            out = self._time_factor(t) * self._autonomous_du(self.base, u_arr)
        elif self.family == "custom-polynomial":
            dcoef = self._poly[1:] * np.arange(1, len(self._poly))[:, None]
            out = self._poly_eval(dcoef, t, u_arr)
        else:
            out = self._autonomous_du(self.family, u_arr)
        out = np.broadcast_to(out, np.broadcast(np.asarray(t, dtype=float), u_arr).shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def potential(self, u):
        """F(u) = integral of f from 0 to u (autonomous specs only)."""
        if not self.autonomous:
            raise NonlinearityError("potential is defined for autonomous reaction terms only")
        fam = self.base if self.family == "time-periodic-product" else self.family
        u = float(u)
        p = self.params
        if fam == "kpp":
            return u**2 / 2 - u**3 / 3
        if fam == "bistable-cubic":
            a = p["a"]
            return -(u**4) / 4 + (1 + a) * u**3 / 3 - a * u**2 / 2
        if fam == "multistable-quintic":
            roots = (0.0, p["theta1"], p["q"], p["theta2"], 1.0)
            anti = np.polyint(np.poly1d(roots, r=True) * (-p["kappa"]))
            return float(anti(u))
        if fam == "custom-polynomial":
            c = self._poly[:, 0]
            return float(np.polynomial.polynomial.polyval(u, np.polynomial.polynomial.polyint(c)))
        val, _ = integrate.quad(lambda s: self.eval(0.0, s), 0.0, u, limit=200,
                                points=[p["theta"]] if fam == "combustion" and 0 < p["theta"] < u else None)
        return val

    # -- kernel / serialization -----------------------------------------------
    def kernel_args(self):
        """(code, params array, rho) for the compiled reaction evaluator."""
        p = self.params
        fam = self.base if self.family == "time-periodic-product" else self.family
        rho = p["rho"] if self.family == "time-periodic-product" else 0.0
        if fam == "kpp":
            arr = np.zeros(1)
        elif fam == "bistable-cubic":
            arr = np.array([p["a"]])
        elif fam == "multistable-quintic":
            arr = np.array([p["kappa"], p["theta1"], p["q"], p["theta2"]])
        elif fam == "combustion":
            arr = np.array([p["theta"], p["p"]])
        else:
            arr = np.ascontiguousarray(self._poly.ravel())
        return KERNEL_CODES[fam], arr, float(rho)

    def to_dict(self):
        out = {"family": self.family, "params": dict(self.params), "period_T": self.period_T}
        if self.base is not None:
            out["base"] = self.base
            out["params"].pop("rho", None)
            out["params"]["rho"] = self.params["rho"]
        return out

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"family", "params", "period_T", "base", "du_mode", "h_u"}
        if unknown:
            raise NonlinearityError(f"unknown keys in nonlinearity spec: {sorted(unknown)}")
        return cls(
            family=data["family"],
            params=dict(data.get("params", {})),
            period_T=float(data.get("period_T", 1.0)),
            base=data.get("base"),
            du_mode=data.get("du_mode", "analytic"),
            h_u=float(data.get("h_u", FD_STEP)),
        )

    def sup_abs(self, lo, hi, n_t=64, n_u=400):
        """Sampled max |f| over [0, T] x [lo, hi]."""
        t = np.linspace(0.0, self.period_T, n_t, endpoint=False)[:, None]
        u = np.linspace(lo, hi, n_u)[None, :]
        return float(np.max(np.abs(self.eval(t, u))))

    def sup_abs_du(self, lo, hi, n_t=64, n_u=400):
        t = np.linspace(0.0, self.period_T, n_t, endpoint=False)[:, None]
        u = np.linspace(lo, hi, n_u)[None, :]
        return float(np.max(np.abs(self.eval_du(t, u))))


def kpp(period_T=1.0):
    return NonlinearitySpec("kpp", {}, period_T)


def bistable(a=0.25, period_T=1.0):
    return NonlinearitySpec("bistable-cubic", {"a": a}, period_T)


def quintic(theta1=0.2, q=0.5, theta2=0.8, kappa=1.0, period_T=1.0):
    return NonlinearitySpec(
        "multistable-quintic",
        {"kappa": kappa, "theta1": theta1, "q": q, "theta2": theta2},
        period_T,
    )


def combustion(theta=0.3, p=1.0, period_T=1.0):
    return NonlinearitySpec("combustion", {"theta": theta, "p": p}, period_T)


def periodic_product(base="bistable-cubic", rho=0.5, period_T=1.0, **base_params):
    params = dict(base_params)
    params["rho"] = rho
    return NonlinearitySpec("time-periodic-product", params, period_T, base=base)
