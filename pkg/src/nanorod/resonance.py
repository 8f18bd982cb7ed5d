"""Materials and plasmon-resonance logic for the rod scattering problem.

Parametrizes lossy negative permittivities by the real and imaginary
parts of 1/eps_c, expands the static reduced operator in the adjoint
spectrum, selects materials that match an eigenvalue, and runs loss
sweeps that measure the blowup (or boundedness) of the scattered
gradient energy.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import layers, spectral
from .asymptotics import contrast_parameter
from .transmission import (
    ScatterConfig,
    assemble_and_solve,
    branch_sqrt,
    gradient_norm,
    gradient_norm_boundary,
    reduced_rhs,
    static_operator,
)

DEFAULT_REGIME_CONSTANT = 0.1


@dataclass(frozen=True)
class Material:
    """Permittivity contrast in loss coordinates.

    theta and rho are the real and imaginary parts of 1/eps_c; rho < 0
    is the lossy sign convention (Im eps_c > 0).
    """

    eps_c: complex
    omega: float
    theta: float
    rho: float
    k_c: complex

    @property
    def lambda_eps(self) -> complex:
        return contrast_parameter(self.eps_c)


def material_from_eps(eps_c, omega) -> Material:
    eps_c = complex(eps_c)
    if eps_c == 0:
        raise ValueError("eps_c = 0 has no loss coordinates (1/eps_c undefined)")
    if omega <= 0:
        raise ValueError("omega must be positive")
    inv = 1.0 / eps_c
    return Material(
        eps_c=eps_c,
        omega=float(omega),
        theta=float(inv.real),
        rho=float(inv.imag),
        k_c=omega * branch_sqrt(eps_c),
    )


def tau_j(material: Material, lam_j) -> complex:
    """Modal multiplier of the static reduced operator.

    tau_j = (theta+1)/2 - (theta-1) lam_j + i rho (1/2 - lam_j); vanishing
    tau_j is the lossless plasmon resonance of mode j.
    """
    lam_j = float(lam_j)
    if not -0.5 < lam_j <= 0.5:
        raise ValueError("adjoint eigenvalues lie in (-1/2, 1/2]")
    theta, rho = material.theta, material.rho
    tau = 0.5 * (theta + 1.0) - (theta - 1.0) * lam_j + 1j * rho * (0.5 - lam_j)
    inv = complex(theta, rho)
    alt = 0.5 * (1.0 + inv) + (1.0 - inv) * lam_j
    if abs(tau - alt) > 1e-12:
        raise ValueError("loss-coordinate and contrast forms of tau disagree")
    return tau


@dataclass(frozen=True)
class ResonantInputs:
    """Loss coordinates and permittivity matching a target eigenvalue."""

    theta: float
    rho: float
    eps_c: complex


def resonant_permittivity(lam_target, rho) -> ResonantInputs:
    """Material whose modal multiplier at lam_target is purely lossy.

    Inverts the matching condition for theta at fixed loss rho <= 0; the
    target 1/2 is the epsilon-near-zero limit and is rejected.
    """
    lam_target = float(lam_target)
    rho = float(rho)
    if rho > 0:
        raise ValueError("rho must be <= 0 (lossy convention)")
    if not -0.5 < lam_target < 0.5:
        if lam_target == 0.5:
            raise ValueError(
                "lam_target = 1/2 is the epsilon-near-zero limit (theta unbounded)"
            )
        raise ValueError("lam_target must lie in (-1/2, 1/2)")
    theta = (lam_target + 0.5 - rho) / (lam_target - 0.5)
    eps_c = 1.0 / complex(theta, rho)
    return ResonantInputs(theta=theta, rho=rho, eps_c=eps_c)


@dataclass(frozen=True)
class StaticSolution:
    """Eigen-expansion inverse of the static reduced operator."""

    density: layers.BoundaryDensity
    coefficients: np.ndarray
    taus: np.ndarray
    pairings: np.ndarray
    residual: float

    def mean_zero_norm(self, spectrum: spectral.NPSpectrum) -> float:
        # phi0 carries a negative square; the energy norm lives on j >= 1
        sq = spectrum.norms[1:] * np.abs(self.coefficients[1:]) ** 2
        return float(np.sqrt(max(np.sum(sq.real), 0.0)))


def static_solution(
    f, spectrum: spectral.NPSpectrum, material: Material, kstar0=None
) -> StaticSolution:
    """Solve the static reduced system by modal division.

    Expands f over the adjoint eigenbasis, divides each coefficient by
    its modal multiplier, and reports the w-weighted relative residual
    against the directly assembled static operator.
    """
    quad = spectrum.quad
    values = layers._values(f)
    if values.shape != (quad.n,):
        raise ValueError("density must live on the spectrum quadrature")
    taus = np.array([tau_j(material, lam) for lam in spectrum.eigenvalues])
    small = np.abs(taus) < 1e-14
    if np.any(small):
        j = int(np.flatnonzero(small)[0])
        raise ValueError(
            f"mode {j} is exactly resonant (|tau| = {abs(taus[j]):.3e}); "
            "add loss to regularize"
        )
    w = quad.weights
    svals = spectrum.stilde.matrix @ spectrum.modes.T
    pairings = -(values * w) @ svals
    coef = pairings / spectrum.norms / taus
    psi0 = coef @ spectrum.modes
    if kstar0 is None:
        kstar0 = np.real(layers.assemble_np_adjoint(quad, 0.0).matrix)
    a0 = static_operator(quad, material.eps_c, kstar0=kstar0).matrix
    residual = float(
        np.sqrt(w @ np.abs(a0 @ psi0 - values) ** 2 / (w @ np.abs(values) ** 2))
    )
    return StaticSolution(
        density=layers.BoundaryDensity(psi0, quad, tag="static expansion"),
        coefficients=coef,
        taus=taus,
        pairings=pairings,
        residual=residual,
    )


def amplification_ratio(
    sol: StaticSolution, spectrum: spectral.NPSpectrum, material: Material, j_star: int
) -> float:
    """Resonant amplification measure of a static solution.

    ||psi_0,c|| |rho| / (a_j*^{-1/2} |<f, phi_j*>|); bounded below by a
    positive constant at a matched resonance.
    """
    if not 1 <= j_star < len(spectrum):
        raise ValueError("j_star must index a mean-zero mode")
    a = float(spectrum.norms[j_star].real)
    pair = abs(complex(sol.pairings[j_star]))
    if pair == 0:
        raise ValueError("incidence does not couple to the selected mode")
    return sol.mean_zero_norm(spectrum) * abs(material.rho) / (pair / np.sqrt(a))


def _flat_trace_pairs(quad: geo.Quadrature, L, delta):
    nodes = quad.nodes
    on_flat = np.abs(np.abs(nodes[:, 1]) - delta) < 1e-9
    top = np.where(on_flat & (nodes[:, 1] > 0))[0]
    bot = np.where(on_flat & (nodes[:, 1] < 0))[0]
    top = top[np.argsort(nodes[top, 0])]
    bot = bot[np.argsort(nodes[bot, 0])]
    if top.size == 0 or top.size != bot.size or np.max(
        np.abs(nodes[top, 0] - nodes[bot, 0])
    ) > 1e-9:
        raise ValueError("boundary does not expose matching flat traces")
    return top, bot


def coupling_check(
    spectrum: spectral.NPSpectrum, j_star: int, direction, geometry: geo.NanorodGeometry
) -> complex:
    """End-source pairing of a mode against the axial log kernel.

    Integrates the two-end log ratio against the average of the mode's
    two flat traces; modes with zero pairing cannot be driven by an
    axial plane wave.
    """
    direction = np.asarray(direction, dtype=float)
    if direction[1] != 0.0:
        raise ValueError("coupling applies to axial incidence (d2 = 0)")
    if not 1 <= j_star < len(spectrum):
        raise ValueError("j_star must index a mean-zero mode")
    quad = spectrum.quad
    L, delta = geometry.L, geometry.delta
    top, bot = _flat_trace_pairs(quad, L, delta)
    x1 = quad.nodes[top, 0]
    avg = 0.5 * (spectrum.modes[j_star, top] + spectrum.modes[j_star, bot])
    kernel = np.log(
        ((x1 + L / 2.0) ** 2 + delta**2) / ((x1 - L / 2.0) ** 2 + delta**2)
    )
    return complex((quad.weights[top] * kernel) @ avg)


def select_resonant_mode(
    spectrum: spectral.NPSpectrum,
    geometry: geo.NanorodGeometry,
    direction=(1.0, 0.0),
    rel_tol=1e-6,
) -> int:
    """Mean-zero eigenvalue closest to 1/2 whose axial coupling is nonzero."""
    couplings = np.array(
        [
            abs(coupling_check(spectrum, j, direction, geometry))
            for j in range(1, len(spectrum))
        ]
    )
    scale = couplings.max()
    if scale == 0:
        raise ValueError("no mode couples to the axial incidence")
    order = np.argsort(0.5 - spectrum.eigenvalues[1:])
    for j in order:
        if couplings[j] > rel_tol * scale:
            return int(j + 1)
    raise ValueError("no coupled mode found")


def regime_guard(omega, rho, c1=DEFAULT_REGIME_CONSTANT):
    """Smallness condition tying the frequency to the loss.

    Returns (value, ok) for omega^2 |ln omega| (1 + 1/|ln omega|) / |rho|
    <= c1; the parenthesis models the stated relative log correction
    with unit constant.
    """
    if rho == 0:
        return float("inf"), False
    l = abs(np.log(omega))
    value = float(omega**2 * l * (1.0 + 1.0 / l) / abs(rho))
    return value, bool(value <= c1)


@dataclass(frozen=True)
class SweepRecord:
    """One solved point of a loss sweep."""

    omega: float
    delta: float
    rho: float
    theta: float
    eps_c: complex
    j_star: int
    lam_target: float
    grad_volume: float
    grad_boundary: float
    psi_c_norm: float
    mode_pairing: complex
    condition: float
    regime_value: float
    regime_ok: bool
    rho_scale: float


@dataclass(frozen=True)
class SweepPlan:
    """Grids and policy of a resonance or control sweep.

    theta set selects the fixed-Re control family eps = 1/(theta+i rho);
    otherwise each point uses the material matched to lam_target (auto
    selected from the spectrum when omitted).
    """

    rhos: tuple
    omegas: tuple = (1e-2,)
    deltas: tuple = (0.05,)
    L: float = 1.0
    resolution: int = 512
    direction: tuple = (1.0, 0.0)
    lam_target: float = None
    theta: float = None
    c1: float = DEFAULT_REGIME_CONSTANT
    n_modes: int = 40
    compute_volume: bool = True
    volume_radius: float = None
    collar_factor: float = 5.0


@dataclass(frozen=True)
class SweepResult:
    records: tuple
    fits: dict
    excluded: int
    runtime: float

    def norms(self, kind="volume") -> np.ndarray:
        key = {"volume": "grad_volume", "boundary": "grad_boundary"}[kind]
        return np.array([getattr(r, key) for r in self.records])


def _fit_axis(points, norms):
    """Least-squares log-log slope with the first and last point dropped."""
    points = np.asarray(points, dtype=float)
    if points.size < 5:
        return None
    order = np.argsort(points)
    x = np.log(points[order][1:-1])
    y = np.log(np.asarray(norms)[order][1:-1])
    return float(np.polyfit(x, y, 1)[0])


def resonance_sweep(plan: SweepPlan) -> SweepResult:
    """Solve the transmission problem over the plan grid and fit slopes.

    Every record carries both gradient energies (exterior volume and the
    boundary energy identity), the regime flag, and the modal pairing;
    regime-violating points are recorded but left out of the fits.
    """
    start = time.perf_counter()
    if plan.theta is not None and plan.lam_target is not None:
        raise ValueError("fix either theta (control) or lam_target (resonant)")
    direction = np.asarray(plan.direction, dtype=float)
    records = []
    for delta in plan.deltas:
        geometry, quad = geo.build_nanorod(plan.L, delta, resolution=plan.resolution)
        spectrum = spectral.np_spectrum(quad, n_modes=min(plan.n_modes, quad.n))
        if plan.lam_target is not None:
            j_star = int(
                1 + np.argmin(np.abs(spectrum.eigenvalues[1:] - plan.lam_target))
            )
        elif direction[1] == 0.0:
            j_star = select_resonant_mode(spectrum, geometry, direction)
        else:
            # broadside incidence has no axial coupling; track the mode
            # nearest the accumulation point anyway for bookkeeping
            j_star = int(1 + np.argmin(0.5 - spectrum.eigenvalues[1:]))
        lam_star = float(spectrum.eigenvalues[j_star])
        for omega in plan.omegas:
            for rho in plan.rhos:
                if plan.theta is not None:
                    theta = float(plan.theta)
                    eps_c = 1.0 / complex(theta, rho)
                else:
                    inputs = resonant_permittivity(lam_star, rho)
                    theta, eps_c = inputs.theta, inputs.eps_c
                material = material_from_eps(eps_c, omega)
                cfg = ScatterConfig(
                    quad=quad, eps_c=eps_c, omega=omega, direction=direction
                )
                sol = assemble_and_solve(cfg)
                grad_b = gradient_norm_boundary(sol, spectrum)
                grad_v = grad_b
                if plan.compute_volume:
                    grad_v = gradient_norm(
                        sol, R=plan.volume_radius, collar_factor=plan.collar_factor
                    ).value
                f = reduced_rhs(cfg)
                svals = spectrum.stilde.matrix @ spectrum.modes[j_star]
                pairing = complex(-(f * quad.weights) @ svals)
                value, ok = regime_guard(omega, rho, plan.c1)
                records.append(
                    SweepRecord(
                        omega=float(omega),
                        delta=float(delta),
                        rho=float(rho),
                        theta=theta,
                        eps_c=complex(eps_c),
                        j_star=j_star,
                        lam_target=lam_star,
                        grad_volume=float(grad_v),
                        grad_boundary=float(grad_b),
                        psi_c_norm=float(grad_b),
                        mode_pairing=pairing,
                        condition=float(sol.condition),
                        regime_value=value,
                        regime_ok=ok,
                        rho_scale=float(omega * delta / abs(rho)),
                    )
                )
    kept = [r for r in records if r.regime_ok]
    excluded = len(records) - len(kept)
    fits = {}
    for axis, getter in (
        ("rho", lambda r: abs(r.rho)),
        ("omega", lambda r: r.omega),
        ("delta", lambda r: r.delta),
    ):
        vals = sorted({getter(r) for r in kept})
        if len(vals) >= 5 and len(vals) == len(kept):
            fits[axis] = _fit_axis(
                [getter(r) for r in kept], [r.grad_volume for r in kept]
            )
        else:
            fits[axis] = None
    return SweepResult(
        records=tuple(records),
        fits=fits,
        excluded=excluded,
        runtime=time.perf_counter() - start,
    )
