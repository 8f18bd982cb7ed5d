"""Substitute single layer, the H* inner product, and the spectral
decomposition of the static Neumann-Poincare adjoint.

The adjoint K*_0 is self-adjoint in the inner product
<u, v> = -(u, w * Stilde v), which is positive definite on mean-zero
densities; the constant-potential direction phi0 (eigenvalue 1/2) is
carried separately with a_0 = <phi0, phi0> = -1 under the normalization
(phi0, chi) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh, lu_factor, lu_solve

from . import layers
from .geometry import Quadrature, reflection_map
from .layers import BoundaryDensity, OperatorMatrix

_DEGENERACY_GAP = 1e-8


@dataclass(frozen=True)
class StildeOperator:
    """Acts as S^0 on mean-zero densities and maps phi0 to chi = 1."""

    matrix: np.ndarray
    phi0: np.ndarray
    quad: Quadrature
    lu: tuple

    def apply(self, v) -> np.ndarray:
        return self.matrix @ layers._values(v)

    def solve(self, v) -> np.ndarray:
        return lu_solve(self.lu, layers._values(v))


@dataclass(frozen=True)
class NPSpectrum:
    """Eigenpairs of K*_0: lambda_0 = 1/2 first, then decreasing |lambda|.

    modes holds one L2-normalized eigenfunction per row (phi0 is instead
    normalized by (phi0, chi) = 1); norms holds a_j = <phi_j, phi_j>
    (a_0 = -1, a_j > 0 otherwise); labels gives the mirror parity of each
    mode as one character per symmetry axis ('e'/'o', '-' if mixed).
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    norms: np.ndarray
    labels: tuple
    stilde: StildeOperator
    calderon_residual: float
    near_degenerate: tuple

    @property
    def quad(self) -> Quadrature:
        return self.stilde.quad

    @property
    def eigenfunctions(self):
        return tuple(
            BoundaryDensity(v, self.quad, tag="eigenfunction") for v in self.modes
        )

    def __len__(self) -> int:
        return self.eigenvalues.size


def equilibrium_density(kstar: OperatorMatrix) -> np.ndarray:
    """Eigendensity of K*_0 at eigenvalue 1/2, normalized to unit mean.

    Inverse iteration with the (numerically singular) shift 1/2; falls back
    to a dense eigensolve if the iteration stalls.
    """
    m = kstar.matrix
    n = m.shape[0]
    w = kstar.quad.weights
    x = np.full(n, 1.0 / n)
    try:
        shifted = lu_factor(np.real(m) - 0.5 * np.eye(n))
        for _ in range(2):
            x = lu_solve(shifted, x)
            x /= np.linalg.norm(x)
    except LinAlgError:
        pass
    if np.linalg.norm(np.real(m) @ x - 0.5 * x) > 1e-8:
        lam, vecs = np.linalg.eig(np.real(m))
        i0 = int(np.argmin(np.abs(lam - 0.5)))
        if abs(lam[i0] - 0.5) > 1e-4:
            raise ValueError(
                f"no NP eigenvalue within 1e-4 of 1/2 (closest {lam[i0]:.3e}); "
                "boundary under-resolved"
            )
        x = np.real(vecs[:, i0])
    return x / (w @ x)


def build_stilde(quad: Quadrature, s0=None, kstar=None) -> StildeOperator:
    if s0 is None:
        s0 = layers.assemble_single_layer(quad, 0.0)
    if kstar is None:
        kstar = layers.assemble_np_adjoint(quad, 0.0)
    phi0 = equilibrium_density(kstar)
    m = np.real(s0.matrix)
    m = m + np.outer(1.0 - m @ phi0, quad.weights)
    return StildeOperator(matrix=m, phi0=phi0, quad=quad, lu=lu_factor(m))


def hstar_inner(u, v, stilde: StildeOperator, conjugate: bool = True) -> complex:
    """<u, v> = -(u, w * Stilde v); conjugate-linear in u when conjugate.

    The bilinear variant (conjugate=False) is what eigen-expansion
    coefficients of complex densities need; norms and orthogonality checks
    use the default.
    """
    uv = layers._values(u)
    vv = layers._values(v)
    if uv.shape != vv.shape or uv.shape != (stilde.quad.n,):
        raise ValueError("densities must live on the Stilde quadrature")
    left = np.conj(uv) if conjugate else uv
    return complex(-(left * stilde.quad.weights) @ (stilde.matrix @ vv))


def calderon_residual(stilde: StildeOperator, kstar: OperatorMatrix) -> float:
    """|| K_0 Stilde - Stilde K*_0 ||_2 / || Stilde ||_2 with K_0 the
    w-weighted adjoint of K*_0."""
    w = stilde.quad.weights
    ks = np.real(kstar.matrix)
    k0 = (ks.T * w[None, :]) / w[:, None]
    s = stilde.matrix
    return float(np.linalg.norm(k0 @ s - s @ ks, 2) / np.linalg.norm(s, 2))


def _parity_labels(quad: Quadrature, modes: np.ndarray) -> tuple:
    maps = [reflection_map(quad, axis) for axis in (0, 1)]
    if all(m is None for m in maps):
        return ("",) * modes.shape[0]
    labels = []
    for v in modes:
        tag = ""
        scale = np.max(np.abs(v))
        for m in maps:
            if m is None:
                tag += "-"
            elif np.max(np.abs(v[m] - v)) < 1e-6 * scale:
                tag += "e"
            elif np.max(np.abs(v[m] + v)) < 1e-6 * scale:
                tag += "o"
            else:
                tag += "-"
        labels.append(tag)
    return tuple(labels)


def np_spectrum(quad: Quadrature, n_modes=None, s0=None, kstar=None) -> NPSpectrum:
    """Solve the H*-symmetrized eigenproblem of K*_0 on mean-zero densities."""
    if kstar is None:
        kstar = layers.assemble_np_adjoint(quad, 0.0)
    stilde = build_stilde(quad, s0=s0, kstar=kstar)
    n = quad.n
    if n_modes is None:
        n_modes = n
    if not 1 <= n_modes <= n:
        raise ValueError("n_modes must lie in [1, node count]")
    w = quad.weights
    ks = np.real(kstar.matrix)

    weight = -(stilde.matrix * w[:, None])
    weight = 0.5 * (weight + weight.T)
    # orthonormal basis of the discrete mean-zero subspace {w}^perp
    z = np.linalg.svd(w[None, :])[2][1:].T
    b = z.T @ weight @ z
    a = z.T @ (weight @ ks) @ z
    a = 0.5 * (a + a.T)
    try:
        lam, coef = eigh(a, b)
    except LinAlgError as exc:
        raise ValueError(
            "H* weight is not positive definite on mean-zero densities; "
            f"the {type(quad.geometry).__name__} boundary is under-resolved "
            f"at {n} nodes"
        ) from exc
    modes = z @ coef
    # L2(dsigma) normalization with a deterministic sign
    modes /= np.sqrt(w @ modes**2)[None, :]
    modes *= np.sign(modes[np.argmax(np.abs(modes), axis=0), np.arange(n - 1)])[None, :]
    order = np.lexsort((-lam, -np.abs(lam)))
    lam = lam[order]
    modes = modes[:, order].T

    svals = (stilde.matrix @ modes.T).T
    norms = -np.einsum("jn,n,jn->j", modes, w, svals)

    eigenvalues = np.concatenate(([0.5], lam))[:n_modes]
    modes = np.vstack([stilde.phi0, modes])[:n_modes]
    norms = np.concatenate(([-1.0], norms))[:n_modes]
    gaps = np.abs(np.diff(eigenvalues[1:]))
    near = tuple(
        (int(j + 1), int(j + 2)) for j in np.flatnonzero(gaps < _DEGENERACY_GAP)
    )
    return NPSpectrum(
        eigenvalues=eigenvalues,
        modes=modes,
        norms=norms,
        labels=_parity_labels(quad, modes),
        stilde=stilde,
        calderon_residual=calderon_residual(stilde, kstar),
        near_degenerate=near,
    )


def decompose_density(psi, spectrum: NPSpectrum):
    """Split psi = psi_c + c0 phi0 with psi_c mean-zero.

    c0 = a0^{-1} <psi, phi0> with the bilinear pairing, which reduces to
    the weighted mean of psi under the (phi0, chi) = 1 normalization.
    """
    st = spectrum.stilde
    values = layers._values(psi)
    chi = st.matrix @ st.phi0
    c0 = complex(-(values * st.quad.weights) @ chi / spectrum.norms[0])
    psi_c = values - c0 * st.phi0
    if np.all(np.isreal(psi_c)):
        psi_c = np.real(psi_c)
    return BoundaryDensity(psi_c, st.quad, tag="mean-zero"), c0
