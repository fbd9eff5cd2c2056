"""Bin-integration factors alpha and beta and their special-function helpers.

The complex error function is evaluated through the Faddeeva function
w(z) = exp(-z^2) erfc(-iz), which stays finite where erf itself overflows.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf, wofz

from .errors import NumericalError

SQRT2 = np.sqrt(2.0)
SQRT_PI = np.sqrt(np.pi)


def dawson(x):
    """Dawson function F(x) = exp(-x^2) int_0^x exp(y^2) dy."""
    x = np.asarray(x, dtype=float)
    return 0.5 * SQRT_PI * np.imag(wofz(x))


def erf_complex(z):
    """erf(z) for complex z, via erf(z) = 1 - exp(-z^2) w(iz)."""
    z = np.asarray(z, dtype=complex)
    # w(iz) loses accuracy for Re(iz) < 0, so reflect through erf(-z) = -erf(z)
    flip = z.real < 0
    zz = np.where(flip, -z, z)
    out = 1.0 - np.exp(-zz * zz) * wofz(1j * zz)
    return np.where(flip, -out, out)


def alpha(lam):
    """Bin-overlap factor exp(-2 lam^2) - 1 + sqrt(2 pi) lam erf(sqrt2 lam)."""
    lam = np.asarray(lam, dtype=float)
    return np.expm1(-2 * lam**2) + np.sqrt(2 * np.pi) * lam * erf(SQRT2 * lam)


def _beta_complex(lam, a):
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    lam, a = np.broadcast_arrays(lam, a)
    g = np.exp(-2 * a**2)
    # exp(-2A^2) erf(sqrt2 (lam -/+ iA)) written with w to avoid overflow
    e_minus = g - np.exp(-2 * lam**2 + 4j * lam * a) * wofz(SQRT2 * a + 1j * SQRT2 * lam)
    e_plus = g - np.exp(-2 * lam**2 - 4j * lam * a) * wofz(-SQRT2 * a + 1j * SQRT2 * lam)
    return (
        np.exp(-2 * lam**2) * np.cos(4 * a * lam)
        - 1.0
        + 2 * SQRT2 * a * dawson(SQRT2 * a)
        + np.sqrt(np.pi / 2) * ((lam - 1j * a) * e_minus + (lam + 1j * a) * e_plus)
    )


def beta(lam, a, imag_tol: float = 1e-8):
    """Bin-overlap factor along an axis with dephasing parameter ``a``.

    Reduces to :func:`alpha` at ``a = 0`` and decays towards zero as the
    momentum-dependent phase winds faster across the bin.
    """
    value = _beta_complex(lam, a)
    worst = np.max(np.abs(value.imag)) if value.size else 0.0
    if worst > imag_tol:
        raise NumericalError(f"beta has imaginary residue {worst:.3g}")
    real = value.real
    return float(real) if real.ndim == 0 else real
