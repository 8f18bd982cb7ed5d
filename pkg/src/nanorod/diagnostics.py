"""Self-check residuals shared by the test suite and the validate command."""

from __future__ import annotations

import numpy as np
from scipy.special import h1vp, hankel1, jv, jvp

from . import layers
from .geometry import Quadrature

# one-sided 5-point first-derivative stencil on {0, h, 2h, 3h, 4h}
_FD5 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def probe_density(nodes) -> np.ndarray:
    """Fixed smooth boundary density used by the jump self-checks."""
    return np.exp(0.3 * np.sin(2.0 * nodes[:, 0]) + 0.2 * nodes[:, 1]) + 0.1 * np.cos(
        nodes[:, 0] - 2.0 * nodes[:, 1]
    )


def disk_series_scattered(eps_c, omega, radius, direction, targets, nmax=24):
    """Exterior scattered field of the penetrable disk by mode matching.

    The total field and the contrast-weighted radial flux are matched at
    r = radius, one 2x2 system per angular mode, built from scipy Bessel
    routines only; a closed-form cross-check on the integral-equation path.
    """
    kc = omega * np.sqrt(complex(eps_c))
    if kc.imag < 0:
        kc = -kc
    n = np.arange(-nmax, nmax + 1)
    zw, zc = omega * radius, kc * radius
    a11 = hankel1(n, zw)
    a12 = -jv(n, zc)
    a21 = omega * h1vp(n, zw)
    a22 = -(kc / eps_c) * jvp(n, zc)
    det = a11 * a22 - a12 * a21
    b = (-jv(n, zw) * a22 + a12 * omega * jvp(n, zw)) / det
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r < radius):
        raise ValueError("series comparison targets must be exterior")
    theta = np.arctan2(x[:, 1], x[:, 0])
    alpha = np.arctan2(direction[1], direction[0])
    coef = (1j**n) * np.exp(-1j * n * alpha) * b
    return (np.exp(1j * np.outer(theta, n)) * hankel1(n[None, :], omega * r[:, None])) @ coef


def jump_relation_residual(
    s_op: layers.OperatorMatrix,
    kstar_op: layers.OperatorMatrix,
    density_fn,
    fine_quad: Quadrature,
    side: str = "exterior",
    eps=1e-3,
    subsample: int = 8,
    keep=None,
) -> float:
    """Defect of the one-sided trace of the single-layer normal derivative.

    The derivative at node x is recovered by a 4th-order one-sided finite
    difference through x + j*eps*nu (j = 0..4, boundary value from the
    Nystrom matrix) evaluated on fine_quad, and compared against
    (+-1/2 I + K*) phi.  Returns max abs defect / max abs phi.  eps may be
    scalar or one value per kept node; it must exceed the evaluation
    distance guard of fine_quad.

    keep, if given, maps the subsampled nodes (m, 2) to a boolean mask;
    use it to drop neighborhoods of curvature jumps, where the normal
    offset expansion of the field is not C^4 and the finite difference
    cannot reach its design order.
    """
    if side not in ("exterior", "interior"):
        raise ValueError("side must be 'exterior' or 'interior'")
    quad = s_op.quad
    if kstar_op.quad is not quad:
        raise ValueError("operators discretize different boundaries")
    sgn = 1.0 if side == "exterior" else -1.0
    idx = np.arange(0, quad.n, subsample)
    if keep is not None:
        idx = idx[np.asarray(keep(quad.nodes[idx]), dtype=bool)]
    phi = np.asarray(density_fn(quad.nodes), dtype=float)
    phi_fine = np.asarray(density_fn(fine_quad.nodes), dtype=float)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), idx.shape).copy()

    ref = (sgn * 0.5 * phi + kstar_op.matrix @ phi)[idx]
    u = np.empty((5, idx.size))
    u[0] = (s_op.matrix @ phi)[idx]
    x0 = quad.nodes[idx]
    nu = quad.normals[idx]
    for j in range(1, 5):
        pts = x0 + sgn * (j * eps)[:, None] * nu
        u[j] = np.real(
            layers.evaluate_potential(fine_quad, phi_fine, s_op.k, pts)
        )
    deriv = sgn * (_FD5 @ u) / eps
    return float(np.max(np.abs(deriv - ref)) / np.max(np.abs(phi)))
