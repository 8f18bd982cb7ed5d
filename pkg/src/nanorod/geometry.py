"""Boundary geometry and quadrature for the stadium rod plus validation shapes.

The rod is a stadium: flat sides of length L at x2 = +-delta joined by two
half-disk caps of radius delta centered at P = (-L/2, 0) and Q = (L/2, 0).
The boundary is C^{1,1}; curvature jumps at the four cap/flat junctions, so
the stadium is discretized with composite Gauss-Legendre panels refined
dyadically toward the junctions.  Disk and ellipse use uniform-in-parameter
trapezoid nodes (they feed global Kress-type quadrature downstream).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_PANEL_ORDER = 16


@dataclass(frozen=True)
class NanorodGeometry:
    L: float
    delta: float

    @property
    def endpoints(self):
        return np.array([-self.L / 2.0, 0.0]), np.array([self.L / 2.0, 0.0])

    @property
    def perimeter(self):
        return 2.0 * self.L + 2.0 * np.pi * self.delta

    @property
    def area(self):
        return np.pi * self.delta**2 + 2.0 * self.L * self.delta

    # part chart: arclength s within each part, counterclockwise
    # 0: bottom flat, left->right at x2 = -delta
    # 1: right cap around Q
    # 2: top flat, right->left at x2 = +delta
    # 3: left cap around P
    part_names = ("flat_bottom", "cap_right", "flat_top", "cap_left")

    def part_length(self, part: int) -> float:
        return self.L if part in (0, 2) else np.pi * self.delta

    def chart(self, part: int, s):
        """Point, outward normal, curvature at arclength s of a part."""
        s = np.asarray(s, dtype=float)
        L, d = self.L, self.delta
        if part == 0:
            x = np.stack([-L / 2 + s, np.full_like(s, -d)], axis=-1)
            n = np.broadcast_to([0.0, -1.0], x.shape)
            kappa = np.zeros_like(s)
        elif part == 1:
            a = -np.pi / 2 + s / d
            x = np.stack([L / 2 + d * np.cos(a), d * np.sin(a)], axis=-1)
            n = np.stack([np.cos(a), np.sin(a)], axis=-1)
            kappa = np.full_like(s, 1.0 / d)
        elif part == 2:
            x = np.stack([L / 2 - s, np.full_like(s, d)], axis=-1)
            n = np.broadcast_to([0.0, 1.0], x.shape)
            kappa = np.zeros_like(s)
        elif part == 3:
            a = np.pi / 2 + s / d
            x = np.stack([-L / 2 + d * np.cos(a), d * np.sin(a)], axis=-1)
            n = np.stack([np.cos(a), np.sin(a)], axis=-1)
            kappa = np.full_like(s, 1.0 / d)
        else:
            raise ValueError(f"part must be 0..3, got {part}")
        return x, np.array(n, dtype=float), kappa

    def radial_exit(self, theta):
        """Distance from the origin to the boundary along direction theta.

        The stadium is star-shaped about the origin; used by volume grids.
        """
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        L, d = self.L, self.delta
        # flat exit: rho * |s| = delta with |rho c| <= L/2
        with np.errstate(divide="ignore"):
            rho_flat = np.where(np.abs(s) > 0, d / np.abs(s), np.inf)
        ok_flat = rho_flat * np.abs(c) <= L / 2
        # cap exit: |rho (c, s) - (sgn(c) L/2, 0)| = delta
        xc = np.sign(np.where(c == 0, 1.0, c)) * L / 2
        b = c * xc
        disc = b * b - (xc * xc - d * d)
        rho_cap = b + np.sqrt(np.maximum(disc, 0.0))
        return np.where(ok_flat, rho_flat, rho_cap)


@dataclass(frozen=True)
class DiskGeometry:
    radius: float

    @property
    def perimeter(self):
        return 2.0 * np.pi * self.radius

    @property
    def area(self):
        return np.pi * self.radius**2

    def radial_exit(self, theta):
        return np.full_like(np.asarray(theta, dtype=float), self.radius)


@dataclass(frozen=True)
class EllipseGeometry:
    a: float
    b: float

    @property
    def area(self):
        return np.pi * self.a * self.b

    def radial_exit(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 1.0 / np.sqrt((np.cos(theta) / self.a) ** 2 + (np.sin(theta) / self.b) ** 2)


@dataclass(frozen=True)
class Panel:
    part: int
    s0: float
    s1: float
    i0: int
    i1: int


@dataclass(frozen=True)
class Quadrature:
    """Discretized closed boundary with arc-length weights.

    kind "global": uniform trapezoid nodes in a 2pi-periodic parameter
    (param, speed set).  kind "panel": composite Gauss-Legendre panels in
    per-part arclength (panels, arclength, panel_order set).
    """

    geometry: object
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    curvatures: np.ndarray
    parts: np.ndarray
    kind: str
    param: np.ndarray | None = None
    speed: np.ndarray | None = None
    panels: tuple = ()
    arclength: np.ndarray | None = None
    panel_order: int = 0
    part_names: tuple = ("boundary",)

    def __post_init__(self):
        for a in (self.nodes, self.normals, self.weights, self.curvatures, self.parts):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def local_spacing(self) -> np.ndarray:
        return self.weights

    @property
    def max_spacing(self) -> float:
        return float(self.weights.max())

    def tangents(self) -> np.ndarray:
        # counterclockwise tangent from outward normal
        return np.stack([-self.normals[:, 1], self.normals[:, 0]], axis=-1)


def _gauss(p):
    x, w = np.polynomial.legendre.leggauss(p)
    return x, w


def _refined_breakpoints(length: float, n_panels: int, depth: int) -> np.ndarray:
    base = n_panels - 2 * depth
    if base < 2:
        raise ValueError("panel budget too small for requested dyadic depth")
    pts = np.linspace(0.0, length, base + 1)
    left = pts[1] * 2.0 ** (-np.arange(depth, 0, -1))
    right = length - (length - pts[-2]) * 2.0 ** (-np.arange(1, depth + 1))
    bp = np.concatenate([[0.0], left, pts[1:-1], right, [length]])
    if np.any(np.diff(bp) <= 0):
        raise AssertionError("breakpoints must be strictly increasing")
    return bp


def _panel_quadrature(geom, panel_counts, depths, panel_order):
    gx, gw = _gauss(panel_order)
    nodes, normals, weights, curv, parts, arcl = [], [], [], [], [], []
    panels = []
    i = 0
    for part in range(4):
        ell = geom.part_length(part)
        bp = _refined_breakpoints(ell, panel_counts[part], depths[part])
        for s0, s1 in zip(bp[:-1], bp[1:]):
            half = (s1 - s0) / 2.0
            s = (s0 + s1) / 2.0 + half * gx
            x, n, k = geom.chart(part, s)
            nodes.append(x)
            normals.append(n)
            weights.append(half * gw)
            curv.append(k)
            parts.append(np.full(panel_order, part, dtype=np.int8))
            arcl.append(s)
            panels.append(Panel(part, float(s0), float(s1), i, i + panel_order))
            i += panel_order
    return Quadrature(
        geometry=geom,
        nodes=np.concatenate(nodes),
        normals=np.concatenate(normals),
        weights=np.concatenate(weights),
        curvatures=np.concatenate(curv),
        parts=np.concatenate(parts),
        kind="panel",
        panels=tuple(panels),
        arclength=np.concatenate(arcl),
        panel_order=panel_order,
        part_names=NanorodGeometry.part_names,
    )


def build_nanorod(L: float, delta: float, resolution: int = 512, panel_order: int = DEFAULT_PANEL_ORDER):
    """Stadium rod boundary with junction-refined Gauss-Legendre panels.

    resolution is a target total node count; actual count is the nearest
    multiple of panel_order satisfying per-part floors.
    """
    if L <= 0 or delta <= 0:
        raise ValueError("L and delta must be positive")
    if delta >= L / 2.0:
        raise ValueError("degenerate stadium: require delta < L/2")
    geom = NanorodGeometry(L=float(L), delta=float(delta))

    q_total = max(16, int(np.ceil(resolution / panel_order)))
    # caps get ~2.7x their arc-length share: they carry the 1/delta
    # curvature and limit the weak-form accuracy of assembled operators
    frac_cap = min(0.3, max(0.18, 2.7 * np.pi * delta / geom.perimeter))
    q_cap = max(6, int(round(q_total * frac_cap)))
    q_flat = max(4, (q_total - 2 * q_cap) // 2)
    counts = [q_flat, q_cap, q_flat, q_cap]
    depths = [min(6, (q - 2) // 2) for q in counts]
    quad = _panel_quadrature(geom, counts, depths, panel_order)
    return geom, quad


def _global_quadrature(geom, n, point, deriv, curvature):
    t = 2.0 * np.pi * np.arange(n) / n
    x = point(t)
    dx = deriv(t)
    speed = np.hypot(dx[:, 0], dx[:, 1])
    tang = dx / speed[:, None]
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=-1)
    return Quadrature(
        geometry=geom,
        nodes=x,
        normals=normals,
        weights=2.0 * np.pi / n * speed,
        curvatures=curvature(t),
        parts=np.zeros(n, dtype=np.int8),
        kind="global",
        param=t,
        speed=speed,
    )


def build_disk(radius: float, n: int = 256):
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n < 16:
        raise ValueError("need n >= 16")
    geom = DiskGeometry(radius=float(radius))
    return geom, _global_quadrature(
        geom,
        n,
        lambda t: radius * np.stack([np.cos(t), np.sin(t)], axis=-1),
        lambda t: radius * np.stack([-np.sin(t), np.cos(t)], axis=-1),
        lambda t: np.full_like(t, 1.0 / radius),
    )


def build_ellipse(a: float, b: float, n: int = 256):
    if a <= 0 or b <= 0:
        raise ValueError("semi-axes must be positive")
    if n < 16:
        raise ValueError("need n >= 16")
    geom = EllipseGeometry(a=float(a), b=float(b))

    def curvature(t):
        sp = np.sqrt((a * np.sin(t)) ** 2 + (b * np.cos(t)) ** 2)
        return a * b / sp**3

    return geom, _global_quadrature(
        geom,
        n,
        lambda t: np.stack([a * np.cos(t), b * np.sin(t)], axis=-1),
        lambda t: np.stack([-a * np.sin(t), b * np.cos(t)], axis=-1),
        curvature,
    )


def project_to_spine(geom: NanorodGeometry, x):
    """Closed-form projection onto the spine segment: clamp x1, drop x2."""
    x = np.asarray(x, dtype=float)
    z = np.array(x, copy=True)
    z[..., 0] = np.clip(x[..., 0], -geom.L / 2.0, geom.L / 2.0)
    z[..., 1] = 0.0
    return z


def signed_area(quad: Quadrature) -> float:
    """(1/2) integral of x . nu over the boundary; equals the enclosed area."""
    return 0.5 * float(np.sum(np.sum(quad.nodes * quad.normals, axis=1) * quad.weights))


def reflection_map(quad: Quadrature, axis: int, tol: float = 1e-9):
    """Index map sending each node to its mirror image (x_axis -> -x_axis).

    Returns None when the node set is not symmetric to within tol times the
    geometry scale.
    """
    from scipy.spatial import cKDTree

    mirrored = quad.nodes.copy()
    mirrored[:, axis] = -mirrored[:, axis]
    tree = cKDTree(quad.nodes)
    dist, idx = tree.query(mirrored)
    scale = np.max(np.abs(quad.nodes))
    if np.max(dist) > tol * scale:
        return None
    return idx
