"""NumPy/LAPACK fallback for the Strang-splitting kernel.

Same contract as the compiled ``_kernels.advance`` (increment-form
diffusion solve, subnormal results flushed to zero); the reaction comes from :meth:`NonlinearitySpec.eval`
instead of the C re-implementation.
"""
import numpy as np
from scipy.linalg import get_lapack_funcs


def advance(u, n_steps, t0, dt, spec, lower, diag, upper, bc_mode):
    n = u.shape[0]
    gttrf, gttrs = get_lapack_funcs(("gttrf", "gttrs"), (u,))
    dl, d, du, du2, ipiv, info = gttrf(lower[1:].copy(), diag.copy(), upper[:-1].copy())
    if info != 0:
        raise np.linalg.LinAlgError("diffusion matrix is singular")
    sl = slice(1, n - 1) if bc_mode == 1 else slice(0, n)
    h = 0.5 * dt
    f = spec.eval
    tiny = np.finfo(float).tiny

    def react(t):
        v = u[sl]
        u[sl] = v + h * f(t + 0.5 * h, v + 0.5 * h * f(t, v))

    for step in range(n_steps):
        t = t0 + step * dt
        react(t)
        r = np.empty_like(u)
        r[0] = -upper[0] * (u[1] - u[0])
        r[1:-1] = -(lower[1:-1] * (u[:-2] - u[1:-1]) + upper[1:-1] * (u[2:] - u[1:-1]))
        r[-1] = -lower[-1] * (u[-2] - u[-1])
        u += gttrs(dl, d, du, du2, ipiv, r)[0]
        u[np.abs(u) < tiny] = 0.0  # subnormals, as in the compiled kernel
        react(t + h)
    bad = np.flatnonzero(~np.isfinite(u))
    return int(bad[0]) if bad.size else -1
