"""Nystrom assembly of the single-layer and Neumann-Poincare adjoint
operators, off-boundary potential evaluation, and the frequency-correction
blocks.

Every kernel is split as A(x,y) ln|x-y| + B(x,y) with A, B analytic along
each boundary part:

  S^k :  A = (1/2pi) J0(kr)
         B = (-(i/4) + (ln(k/2)+gamma)/(2pi)) J0(kr) + (1/4) R0(kr)
  K*^k:  A = -(k/2pi) J1(kr) q,   q = (x-y).nu_x / r
         B = k q ((i/4) - (ln(k/2)+gamma)/(2pi)) J1(kr) - (k/4) R1(kr) q
             + (x-y).nu_x / (2pi r^2)
  k = 0: A = 1/2pi resp. 0; B = 0 resp. the static term with coincidence
         limit kappa(x)/(4pi).

R0, R1 are the entire log-free remainders from nanorod.special.  On global
(trapezoid) grids the log factor is integrated by the spectrally accurate
Kress rule; on panel grids the self-panel uses analytic log-weighted
Legendre moments and all other near interactions use adaptive dyadic
subdivision of the source panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import special as fs
from .geometry import Quadrature

_NEAR_FACTOR = 0.6  # replace plain rule when target closer than this x panel length
_SEP_FACTOR = 1.0  # adaptive leaves accepted beyond this x leaf length
_MAX_DEPTH = 40


@dataclass(frozen=True)
class BoundaryDensity:
    values: np.ndarray
    quad: Quadrature
    tag: str = "density"

    def __post_init__(self):
        if self.values.shape != (self.quad.n,):
            raise ValueError("density length must match node count")

    def mean(self) -> complex:
        return complex(np.sum(self.quad.weights * self.values))

    def is_mean_zero(self, rtol: float = 1e-8) -> bool:
        norm = np.sqrt(np.sum(self.quad.weights * np.abs(self.values) ** 2))
        return abs(self.mean()) <= rtol * max(norm, 1e-300)


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    kernel: str
    k: complex
    quad: Quadrature

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.quad.n:
            raise ValueError("operator must be square with dimension = node count")

    def apply(self, density):
        v = density.values if isinstance(density, BoundaryDensity) else np.asarray(density)
        return self.matrix @ v


def _values(density):
    return density.values if isinstance(density, BoundaryDensity) else np.asarray(density)


# ---------------------------------------------------------------------------
# kernel splits


class _SingleLayerKernel:
    tag = "S^k"

    def __init__(self, k):
        self.k = k
        self.static = k == 0
        self.dtype = float if self.static else complex
        if not self.static:
            self._bc = -0.25j + (np.log(k / 2.0) + fs.GAMMA) / (2.0 * np.pi)

    def a_part(self, r, qhat=None):
        if self.static:
            return np.full(np.shape(r), 1.0 / (2 * np.pi))
        return fs.bessel_j0(self.k * np.asarray(r, dtype=complex)) / (2 * np.pi)

    def b_part(self, r, qraw=None, diag=None, kappa=None):
        if self.static:
            return np.zeros(np.shape(r))
        kr = self.k * np.asarray(r, dtype=complex)
        return self._bc * fs.bessel_j0(kr) + 0.25 * fs.r0_entire(kr)

    def full(self, r, qraw=None):
        # r > 0 everywhere
        return self.a_part(r) * np.log(r) + self.b_part(r)


class _AdjointKernel:
    tag = "K*^k"

    def __init__(self, k):
        self.k = k
        self.static = k == 0
        self.dtype = float if self.static else complex
        if not self.static:
            self._bc = 0.25j - (np.log(k / 2.0) + fs.GAMMA) / (2.0 * np.pi)

    def a_part(self, r, qhat):
        if self.static:
            return np.zeros(np.shape(r))
        kr = self.k * np.asarray(r, dtype=complex)
        return -(self.k / (2 * np.pi)) * fs.bessel_j1(kr) * qhat

    def b_part(self, r, qraw, diag=None, kappa=None):
        r = np.asarray(r, dtype=float)
        rsafe = np.where(r == 0, 1.0, r)
        out = qraw / (2 * np.pi * rsafe**2)
        if diag is not None:
            out = np.asarray(out)
            out[diag] = kappa / (4 * np.pi)
        if not self.static:
            kr = self.k * rsafe.astype(complex)
            qhat = qraw / rsafe
            smooth = self.k * qhat * (
                self._bc * fs.bessel_j1(kr) - 0.25 * fs.r1_entire(kr)
            )
            if diag is not None:
                smooth = np.asarray(smooth)
                smooth[diag] = 0.0
            out = out + smooth
        return out

    def full(self, r, qraw):
        out = self.b_part(r, qraw)
        if not self.static:
            out = out + self.a_part(r, qraw / r) * np.log(r)
        return out


class _R2LogKernel:
    """-(1/8pi) |x-y|^2 ln|x-y|, the log part of the k^2 correction."""

    tag = "S_{B,2}log"
    static = True
    dtype = float

    def a_part(self, r, qhat=None):
        return -np.asarray(r) ** 2 / (8 * np.pi)

    def b_part(self, r, qraw=None, diag=None, kappa=None):
        return np.zeros(np.shape(r))

    def full(self, r, qraw=None):
        return self.a_part(r) * np.log(r)


# ---------------------------------------------------------------------------
# global (Kress) assembly for smooth closed curves


def _kress_vector(n_nodes: int) -> np.ndarray:
    """First row of the circulant quadrature for ln(4 sin^2((t-s)/2)).

    R(d) = -(2pi/n) sum_{m=1}^{n-1} cos(m d 2pi/N)/m - (pi/n^2) cos(n d 2pi/N)
    with N nodes and n = N/2; exact for trigonometric polynomials of degree
    < n against the log kernel.
    """
    n = n_nodes // 2
    d = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    m = np.arange(1, n)
    rv = -(2 * np.pi / n) * (np.cos(np.outer(d, m)) / m).sum(axis=1)
    rv -= (np.pi / n**2) * np.cos(n * d)
    return rv


def _pair_geometry(quad):
    dx = quad.nodes[:, None, :] - quad.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
    qraw = np.einsum("ijk,ik->ij", dx, quad.normals)
    return dx, r, qraw


def _assemble_global(quad, kern) -> np.ndarray:
    n = quad.n
    if n % 2:
        raise ValueError("global rule needs an even node count")
    _, r, qraw = _pair_geometry(quad)
    diag = np.eye(n, dtype=bool)
    t = quad.param
    dt = t[:, None] - t[None, :]
    sin2 = 2.0 * np.abs(np.sin(dt / 2.0))
    # ln r = (1/2) ln(4 sin^2((t-s)/2)) + Lc, Lc smooth with diagonal ln|x'|
    with np.errstate(divide="ignore", invalid="ignore"):
        lc = np.log(np.where(diag, 1.0, r) / np.where(diag, 1.0, sin2))
    lc[diag] = np.log(quad.speed)

    rdiv = np.where(diag, 1.0, r)
    qhat = np.where(diag, 0.0, qraw / rdiv)
    # coincidence limit of the log factor needs r -> 0, not a placeholder
    amat = kern.a_part(np.where(diag, 0.0, r), qhat)
    if hasattr(kern, "k") and not kern.static and kern.tag == "K*^k":
        amat = np.asarray(amat)
        amat[diag] = 0.0
    if kern.tag == "S_{B,2}log":
        amat = np.asarray(amat)
        amat[diag] = 0.0
    bmat = kern.b_part(r, qraw, diag=diag, kappa=quad.curvatures)

    rv = _kress_vector(n)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    kress = rv[idx]
    trap = 2.0 * np.pi / n
    m = 0.5 * kress * amat + trap * (amat * lc + bmat)
    return m * quad.speed[None, :]


# ---------------------------------------------------------------------------
# panel assembly


def _log_moments(t0: float, p: int) -> np.ndarray:
    """I_k = int_{-1}^1 P_k(s) ln|s - t0| ds for k < p, |t0| < 1."""
    Q = np.empty(p + 1)
    Q[0] = np.arctanh(t0)
    if p >= 1:
        Q[1] = t0 * Q[0] - 1.0
    for m in range(1, p):
        Q[m + 1] = ((2 * m + 1) * t0 * Q[m] - m * Q[m - 1]) / (m + 1)
    out = np.empty(p)
    out[0] = (1 - t0) * np.log1p(-t0) + (1 + t0) * np.log1p(t0) - 2.0
    for k in range(1, p):
        out[k] = 2.0 * (Q[k + 1] - Q[k - 1]) / (2 * k + 1)
    return out


class _PanelWorkspace:
    def __init__(self, p):
        self.p = p
        self.gx, self.gw = np.polynomial.legendre.leggauss(p)
        self.V = np.polynomial.legendre.legvander(self.gx, p - 1)
        self.Vinv = np.linalg.inv(self.V)

    def interp_matrix(self, shat):
        return np.polynomial.legendre.legvander(shat, self.p - 1) @ self.Vinv


def _kernel_row_values(kern, x, nu_x, y, diag_j=None, kappa=None):
    """Kernel split (A, B) from one target to a set of source points."""
    dx = x[None, :] - y
    r = np.hypot(dx[:, 0], dx[:, 1])
    qraw = dx @ nu_x
    diag = None
    if diag_j is not None:
        diag = np.zeros(r.shape, dtype=bool)
        diag[diag_j] = True
        r = np.where(diag, 0.0, r)
    rdiv = np.where(r == 0, 1.0, r)
    a = kern.a_part(r, np.where(r == 0, 0.0, qraw / rdiv))
    if diag_j is not None and np.ndim(a):
        a = np.asarray(a, dtype=kern.dtype)
        if kern.tag != "S^k":
            a[diag_j] = 0.0
    b = kern.b_part(r, qraw, diag=diag, kappa=kappa)
    return np.broadcast_to(a, r.shape), np.asarray(b), r


def _self_panel_row(quad, kern, ws, i, pn):
    sl = slice(pn.i0, pn.i1)
    y = quad.nodes[sl]
    s = quad.arclength[sl]
    h = (pn.s1 - pn.s0) / 2.0
    t0 = quad.arclength[i]
    t0hat = (t0 - (pn.s0 + pn.s1) / 2.0) / h
    t0hat = min(max(t0hat, -1.0 + 1e-14), 1.0 - 1e-14)
    j_local = i - pn.i0

    a, b, r = _kernel_row_values(
        kern, quad.nodes[i], quad.normals[i], y, diag_j=j_local, kappa=quad.curvatures[i]
    )
    mom = _log_moments(float(t0hat), ws.p)
    mom = mom.copy()
    mom[0] += 2.0 * np.log(h)
    pi_w = h * (mom @ ws.Vinv)

    # smooth remainder: A ln(r/|s-t0|) + B under the plain panel rule
    ds = np.abs(s - t0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lcorr = np.log(np.where(ds == 0, 1.0, r / np.where(ds == 0, 1.0, ds)))
    lcorr[j_local] = 0.0
    return pi_w * a + (h * ws.gw) * (a * lcorr + b)


def _adaptive_row(quad, kern, ws, i, pn):
    geom = quad.geometry
    x = quad.nodes[i]
    nu = quad.normals[i]
    pc = (pn.s0 + pn.s1) / 2.0
    ph = (pn.s1 - pn.s0) / 2.0
    row = np.zeros(ws.p, dtype=kern.dtype)
    stack = [(pn.s0, pn.s1, 0)]
    while stack:
        a0, b0, d = stack.pop()
        h = (b0 - a0) / 2.0
        s = (a0 + b0) / 2.0 + h * ws.gx
        y, _, _ = geom.chart(pn.part, s)
        dxl = x[None, :] - y
        r = np.hypot(dxl[:, 0], dxl[:, 1])
        if r.min() > _SEP_FACTOR * (b0 - a0) or d >= _MAX_DEPTH:
            kv = kern.full(r, dxl @ nu)
            lmat = ws.interp_matrix((s - pc) / ph)
            row += (kv * (h * ws.gw)) @ lmat
        else:
            mid = (a0 + b0) / 2.0
            stack.append((a0, mid, d + 1))
            stack.append((mid, b0, d + 1))
    return row


def _assemble_panel(quad, kern) -> np.ndarray:
    n = quad.n
    _, r, qraw = _pair_geometry(quad)
    diag = np.eye(n, dtype=bool)
    rs = np.where(diag, 1.0, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = kern.a_part(rs, qraw / rs) * np.log(rs) + kern.b_part(
            r, qraw, diag=diag, kappa=quad.curvatures
        )
    base = np.asarray(base, dtype=kern.dtype)
    base[diag] = 0.0
    m = base * quad.weights[None, :]

    ws = _PanelWorkspace(quad.panel_order)
    for pn in quad.panels:
        y = quad.nodes[pn.i0 : pn.i1]
        dist = np.min(
            np.sqrt(
                (quad.nodes[:, 0, None] - y[None, :, 0]) ** 2
                + (quad.nodes[:, 1, None] - y[None, :, 1]) ** 2
            ),
            axis=1,
        )
        near = np.where(dist < _NEAR_FACTOR * (pn.s1 - pn.s0))[0]
        for i in near:
            if pn.i0 <= i < pn.i1:
                m[i, pn.i0 : pn.i1] = _self_panel_row(quad, kern, ws, i, pn)
            else:
                m[i, pn.i0 : pn.i1] = _adaptive_row(quad, kern, ws, i, pn)
    return m


def _assemble(quad, kern) -> np.ndarray:
    if quad.kind == "global":
        return _assemble_global(quad, kern)
    return _assemble_panel(quad, kern)


def _check_wavenumber(quad, k):
    if k is None:
        raise ValueError("wavenumber required")
    kc = complex(k)
    if kc.imag != 0:
        diam = max(float(np.ptp(quad.nodes[:, 0])), float(np.ptp(quad.nodes[:, 1])))
        if abs(kc) * diam >= 1.0:
            raise ValueError("complex wavenumber outside the quasi-static series domain")
        return kc
    return kc.real


def assemble_single_layer(quad: Quadrature, k) -> OperatorMatrix:
    """Nystrom matrix of phi -> int G_k(x-y) phi(y) dsigma(y) at the nodes."""
    k = _check_wavenumber(quad, k)
    kern = _SingleLayerKernel(k)
    return OperatorMatrix(_assemble(quad, kern), "S^k", k, quad)


def assemble_np_adjoint(quad: Quadrature, k) -> OperatorMatrix:
    """Nystrom matrix of the principal-value adjoint double layer K*^k."""
    k = _check_wavenumber(quad, k)
    kern = _AdjointKernel(k)
    return OperatorMatrix(_assemble(quad, kern), "K*^k", k, quad)


@dataclass(frozen=True)
class CorrectionOperators:
    """k^2-order correction blocks of the single layer and NP adjoint.

    sb2(tau_k) returns the combined kernel -(1/8pi)(ln r - tau_k) r^2; the
    sign of tau_k is fixed by requiring the k^4 ln k residual of the S^k
    expansion (see nanorod.special.hankel_smallk).
    """

    sb1: OperatorMatrix
    sb2_log: OperatorMatrix
    kb1: OperatorMatrix

    def sb2(self, tau_k) -> OperatorMatrix:
        q = self.sb1.quad
        return OperatorMatrix(
            self.sb2_log.matrix - tau_k * self.sb1.matrix, "S_{B,2}", 0.0, q
        )


def assemble_corrections(quad: Quadrature) -> CorrectionOperators:
    _, r, qraw = _pair_geometry(quad)
    sb1 = -(r**2) / (8 * np.pi) * quad.weights[None, :]
    kb1 = -qraw / (4 * np.pi) * quad.weights[None, :]
    sb2_log = _assemble(quad, _R2LogKernel())
    return CorrectionOperators(
        sb1=OperatorMatrix(sb1, "S_{B,1}", 0.0, quad),
        sb2_log=OperatorMatrix(sb2_log, "S_{B,2}log", 0.0, quad),
        kb1=OperatorMatrix(kb1, "K_{B,1}", 0.0, quad),
    )


# ---------------------------------------------------------------------------
# off-boundary evaluation


def _target_guard(quad, targets, enforce=True):
    tree = cKDTree(quad.nodes)
    d, idx = tree.query(np.atleast_2d(targets))
    limit = 3.0 * quad.weights[idx]
    bad = d <= limit
    if enforce and np.any(bad):
        worst = int(np.argmin(d - limit))
        raise ValueError(
            f"{int(bad.sum())} target(s) closer than 3x local node spacing; "
            f"worst at distance {d[worst]:.3e} vs limit {limit[worst]:.3e} "
            "(near-boundary evaluation is out of scope)"
        )


def evaluate_potential(quad: Quadrature, density, k, targets, enforce_distance=True):
    """Plain quadrature of G_k against the density at off-boundary targets."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    _target_guard(quad, targets, enforce_distance)
    v = _values(density) * quad.weights
    dx = targets[:, None, :] - quad.nodes[None, :, :]
    g = fs.fundamental_solution(k, dx)
    return g @ v


def evaluate_potential_gradient(quad: Quadrature, density, k, targets, enforce_distance=True):
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    _target_guard(quad, targets, enforce_distance)
    v = _values(density) * quad.weights
    dx = targets[:, None, :] - quad.nodes[None, :, :]
    g = fs.fundamental_gradient(k, dx)
    return np.einsum("tjc,j->tc", g, v)
