"""Numerical laboratory for propagating terraces of time-periodic
reaction-diffusion equations u_t = u_xx + f(t, u)."""

__version__ = "0.1.0"
