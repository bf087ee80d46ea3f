# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Strang-splitting kernel.

Mirrors :mod:`terrace_lab._kernels_py`; the reaction families are re-coded
here in C and must stay in sync with :mod:`terrace_lab.nonlinearity`.
"""
from libc.float cimport DBL_MIN
from libc.math cimport sin, cos, fabs, isfinite, M_PI
from libc.stdlib cimport malloc, free

cdef enum:
    KPP = 1
    BISTABLE = 2
    QUINTIC = 3
    COMBUSTION = 4
    POLY = 5


cdef inline double _react_u(int code, const double* p, double u) noexcept nogil:
    """Autonomous part of the reaction (not used for POLY)."""
    if code == KPP:
        return u * (1.0 - u)
    elif code == BISTABLE:
        return u * (1.0 - u) * (u - p[0])
    elif code == QUINTIC:
        return p[0] * u * (u - p[1]) * (u - p[2]) * (u - p[3]) * (1.0 - u)
    elif code == COMBUSTION:
        if u > p[0]:
            return (u - p[0]) * (p[1] - u)
        return 0.0
    return 0.0


cdef inline void _time_coeffs(int code, const double* p, int npar, double rho, double omega,
                              double t, double* scale, double* poly) noexcept nogil:
    """Time-dependent factors at ``t``: the rho-modulation or the POLY coefficients."""
    cdef double s = sin(omega * t)
    cdef double c
    cdef int j
    scale[0] = 1.0 + rho * s if rho != 0.0 else 1.0
    if code == POLY:
        c = cos(omega * t)
        for j in range(npar // 3):
            poly[j] = p[3 * j] + p[3 * j + 1] * s + p[3 * j + 2] * c


cdef inline double _react_at(int code, const double* p, int ncoef, double scale,
                             const double* poly, double u) noexcept nogil:
    cdef double val
    cdef int j
    if code == POLY:
        val = 0.0
        j = ncoef - 1
        while j >= 0:
            val = val * u + poly[j]
            j -= 1
        return val
    return scale * _react_u(code, p, u)


cdef inline double _react(int code, const double* p, int npar, double rho,
                          double omega, double t, double u, double* poly) noexcept nogil:
    cdef double scale
    _time_coeffs(code, p, npar, rho, omega, t, &scale, poly)
    return _react_at(code, p, npar // 3, scale, poly, u)


cdef inline void _reaction_half(double[::1] u, Py_ssize_t lo, Py_ssize_t hi, double t, double h,
                                int code, const double* p, int npar, double rho,
                                double omega, double* poly0, double* poly1) noexcept nogil:
    # RK2 midpoint; the time factors are the same for every cell
    cdef Py_ssize_t i
    cdef double ui, k1, s0, s1
    cdef int ncoef = npar // 3
    _time_coeffs(code, p, npar, rho, omega, t, &s0, poly0)
    _time_coeffs(code, p, npar, rho, omega, t + 0.5 * h, &s1, poly1)
    for i in range(lo, hi):
        ui = u[i]
        k1 = _react_at(code, p, ncoef, s0, poly0, ui)
        u[i] = ui + h * _react_at(code, p, ncoef, s1, poly1, ui + 0.5 * h * k1)


def reaction_values(double[::1] u, double t, double period, int code,
                    const double[::1] params, double rho):
    """f(t, u) evaluated by the compiled reaction code (for cross-checks)."""
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double omega = 2.0 * M_PI / period
    cdef double* poly = <double*> malloc((params.shape[0] // 3 + 1) * sizeof(double))
    if poly == NULL:
        raise MemoryError()
    out = [0.0] * n
    for i in range(n):
        out[i] = _react(code, &params[0], params.shape[0], rho, omega, t, u[i], poly)
    free(poly)
    return out


def advance(double[::1] u, long n_steps, double t0, double dt, double period,
            int code, const double[::1] params, double rho,
            const double[::1] lower, const double[::1] diag, const double[::1] upper,
            int bc_mode):
    """Advance ``u`` in place by ``n_steps`` Strang steps.

    ``lower``/``diag``/``upper`` are the bands of the implicit diffusion
    matrix (``lower[0]`` and ``upper[n-1]`` unused), whose rows must sum to
    one.  The solve is done for the increment, so constant data stay
    bit-for-bit constant.  Results below DBL_MIN in magnitude are flushed
    to zero, which keeps the update monotone.  ``bc_mode`` 1 keeps the end nodes frozen;
    otherwise every node feels the reaction.

    Returns the index of the first non-finite entry, or -1.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, lo = 0, hi = n
    cdef long step
    cdef double t, h = 0.5 * dt, omega = 2.0 * M_PI / period
    cdef int npar = params.shape[0]
    cdef const double* p = &params[0]
    cdef double* cp = <double*> malloc(n * sizeof(double))
    cdef double* inv_den = <double*> malloc(n * sizeof(double))
    cdef double* r = <double*> malloc(n * sizeof(double))
    cdef double* poly0 = <double*> malloc((npar // 3 + 1) * sizeof(double))
    cdef double* poly1 = <double*> malloc((npar // 3 + 1) * sizeof(double))
    cdef double den
    if cp == NULL or inv_den == NULL or r == NULL or poly0 == NULL or poly1 == NULL:
        free(cp)
        free(inv_den)
        free(r)
        free(poly0)
        free(poly1)
        raise MemoryError()
    if bc_mode == 1:
        lo = 1
        hi = n - 1
    with nogil:
        # Thomas factorization, reused for every step
        inv_den[0] = 1.0 / diag[0]
        cp[0] = upper[0] * inv_den[0]
        for i in range(1, n):
            den = diag[i] - lower[i] * cp[i - 1]
            inv_den[i] = 1.0 / den
            cp[i] = upper[i] * inv_den[i] if i < n - 1 else 0.0
        t = t0
        for step in range(n_steps):
            _reaction_half(u, lo, hi, t, h, code, p, npar, rho, omega, poly0, poly1)
            # increment form: A d = u - A u, computed from differences
            r[0] = -upper[0] * (u[1] - u[0])
            for i in range(1, n - 1):
                r[i] = -(lower[i] * (u[i - 1] - u[i]) + upper[i] * (u[i + 1] - u[i]))
            r[n - 1] = -lower[n - 1] * (u[n - 2] - u[n - 1])
            r[0] = r[0] * inv_den[0]
            for i in range(1, n):
                r[i] = (r[i] - lower[i] * r[i - 1]) * inv_den[i]
            i = n - 2
            while i >= 0:
                r[i] = r[i] - cp[i] * r[i + 1]
                i -= 1
            for i in range(n):
                den = u[i] + r[i]
                # subnormals in the far tail cost ~50x per operation
                u[i] = 0.0 if fabs(den) < DBL_MIN else den  # NaN passes through
            _reaction_half(u, lo, hi, t + h, h, code, p, npar, rho, omega, poly0, poly1)
            t = t0 + (step + 1) * dt
    free(cp)
    free(inv_den)
    free(r)
    free(poly0)
    free(poly1)
    for i in range(n):
        if not isfinite(u[i]):
            return i
    return -1
