"""Pick the Strang-step kernel at import time.

The compiled extension is used when it imports; ``TERRACE_LAB_BACKEND=python``
forces the NumPy fallback.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = ("compiled", "python") if _compiled is not None else ("python",)
_requested = os.environ.get("TERRACE_LAB_BACKEND", "").strip().lower()
if _requested and _requested not in ("compiled", "python"):
    raise ImportError(f"TERRACE_LAB_BACKEND must be 'compiled' or 'python', got {_requested!r}")
DEFAULT = "python" if _compiled is None or _requested == "python" else "compiled"


def advance(u, n_steps, t0, dt, spec, lower, diag, upper, bc_mode, backend=None):
    """Run ``n_steps`` Strang steps in place; returns first bad index or -1."""
    backend = backend or DEFAULT
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        code, params, rho = spec.kernel_args()
        return _compiled.advance(u, n_steps, t0, dt, spec.period_T, code, params, rho,
                                 lower, diag, upper, bc_mode)
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return _kernels_py.advance(u, n_steps, t0, dt, spec, lower, diag, upper, bc_mode)
