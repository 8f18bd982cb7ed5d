"""Bessel/Hankel evaluation, the Helmholtz fundamental solution, and the
small-wavenumber Hankel expansion constants.

The quadrature code needs the kernels split into an analytic part times
ln|x-y| plus a smooth remainder.  That split is driven by the entire
functions

    R0(z) = Y0(z) - (2/pi)(ln(z/2) + gamma) J0(z)
    R1(z) = Y1(z) - (2/pi)(ln(z/2) + gamma) J1(z) + 2/(pi z)

which are evaluated by their power series for |z| <= 4 (direct subtraction
loses digits there) and by subtraction from library Bessel values beyond.
Everything accepts real or complex wavenumbers; complex arguments route
through the AMOS-backed scipy entry points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

GAMMA = float(np.euler_gamma)

# series horizon for the entire remainders; beyond this the direct
# subtraction in the defining formulas is well conditioned
_SERIES_RADIUS = 4.0
_SERIES_TERMS = 28

# R0 coefficients: (2/pi) (-1)^{m+1} H_m / (m!)^2 for q = z^2/4, m >= 1
_H = np.cumsum(1.0 / np.arange(1, _SERIES_TERMS + 1))
_fact = _sp.factorial(np.arange(_SERIES_TERMS + 1))
_R0_COEF = (2.0 / np.pi) * ((-1.0) ** np.arange(2, _SERIES_TERMS + 2)) * _H / _fact[1:] ** 2

# R1: -(1/pi) sum_k (-1)^k (H_k + H_{k+1}) (z/2)^{2k+1} / (k! (k+1)!)
_Hk = np.concatenate([[0.0], _H])
_R1_COEF = (
    -(1.0 / np.pi)
    * ((-1.0) ** np.arange(_SERIES_TERMS))
    * (_Hk[:_SERIES_TERMS] + _Hk[1 : _SERIES_TERMS + 1])
    / (_fact[:_SERIES_TERMS] * _fact[1 : _SERIES_TERMS + 1])
)


def _polyval_ascending(coef, q):
    out = np.zeros_like(q)
    for c in coef[::-1]:
        out = out * q + c
    return out


def bessel_j0(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return _sp.jv(0, z)
    return _sp.j0(z)


def bessel_j1(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return _sp.jv(1, z)
    return _sp.j1(z)


def bessel_y0(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return _sp.yv(0, z)
    if np.any(z <= 0):
        raise ValueError("Y0 requires a positive argument")
    return _sp.y0(z)


def bessel_y1(z):
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return _sp.yv(1, z)
    if np.any(z <= 0):
        raise ValueError("Y1 requires a positive argument")
    return _sp.y1(z)


_BESSEL = {"J0": bessel_j0, "J1": bessel_j1, "Y0": bessel_y0, "Y1": bessel_y1}


def bessel(order: str, x):
    """Evaluate J0/J1/Y0/Y1 at positive real (or complex) argument."""
    try:
        f = _BESSEL[order]
    except KeyError:
        raise ValueError(f"unknown Bessel order {order!r}") from None
    return f(x)


def hankel1(order: int, x):
    """H_n^(1)(x) = J_n(x) + i Y_n(x) for n in {0, 1}, x > 0 (or complex)."""
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are provided")
    x = np.asarray(x)
    if not np.iscomplexobj(x) and np.any(x <= 0):
        raise ValueError("hankel1 requires a positive argument")
    return _sp.hankel1(order, x)


def r0_entire(z):
    """Y0(z) - (2/pi)(ln(z/2)+gamma) J0(z), entire, R0(0) = 0."""
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape, dtype=z.dtype)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        q = z[small] ** 2 / 4.0
        out[small] = _polyval_ascending(_R0_COEF, q) * q
    if np.any(~small):
        zz = z[~small]
        out[~small] = bessel_y0(zz) - (2.0 / np.pi) * (np.log(zz / 2.0) + GAMMA) * bessel_j0(zz)
    return out[0] if scalar else out


def r1_entire(z):
    """Y1(z) - (2/pi)(ln(z/2)+gamma) J1(z) + 2/(pi z), entire, R1(0) = 0."""
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape, dtype=z.dtype)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        q = zs**2 / 4.0
        out[small] = _polyval_ascending(_R1_COEF, q) * (zs / 2.0)
    if np.any(~small):
        zz = z[~small]
        out[~small] = (
            bessel_y1(zz)
            - (2.0 / np.pi) * (np.log(zz / 2.0) + GAMMA) * bessel_j1(zz)
            + 2.0 / (np.pi * zz)
        )
    return out[0] if scalar else out


@dataclass(frozen=True)
class HankelExpansionConstants:
    """Constants of the small-argument expansion of H0^(1)."""

    c_k: complex
    tau_k: complex
    gamma: float = GAMMA


def expansion_constants(k) -> HankelExpansionConstants:
    k = complex(k)
    c_k = 1.0 + 2j / np.pi * (np.log(k / 2.0) + GAMMA)
    tau_k = 1.0 + np.log(2.0) + 1j * np.pi / 2.0 - GAMMA
    return HankelExpansionConstants(c_k=c_k, tau_k=complex(tau_k))


def hankel_smallk(k, r):
    """Four-term small-k truncation of H0^(1)(k r).

    Returns c_k + i(2/pi)ln r - (i/2pi)(k^2 ln k) r^2
            - (i/2pi) k^2 r^2 (ln r - tau_k).
    The r^2 coefficient carries (ln r - tau_k); the plus sign seen in some
    derivations leaves an O(k^2) residual instead of O(k^4 ln k).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    cst = expansion_constants(k)
    k = complex(k)
    lr = np.log(r)
    return (
        cst.c_k
        + 2j / np.pi * lr
        - 1j / (2 * np.pi) * (k**2 * np.log(k)) * r**2
        - 1j / (2 * np.pi) * k**2 * r**2 * (lr - cst.tau_k)
    )


def _norm_and_guard(x):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0):
        raise ValueError("fundamental solution is singular at |x| = 0")
    return x, r


def fundamental_solution(k, x):
    """G_k(x): -(i/4) H0^(1)(k|x|) for k != 0, (1/2pi) ln|x| for k = 0.

    x has shape (..., 2); k may be complex (Im sqrt branch handled by caller).
    """
    _, r = _norm_and_guard(x)
    if k == 0:
        return np.log(r) / (2.0 * np.pi)
    kr = np.asarray(k * r)
    return -0.25j * _sp.hankel1(0, kr)


def fundamental_gradient(k, x):
    """grad G_k(x): (i/4) k H1^(1)(k|x|) x/|x|; x/(2pi |x|^2) for k = 0."""
    x, r = _norm_and_guard(x)
    if k == 0:
        return x / (2.0 * np.pi * r[..., None] ** 2)
    kr = np.asarray(k * r)
    coef = 0.25j * k * _sp.hankel1(1, kr) / r
    return coef[..., None] * x
