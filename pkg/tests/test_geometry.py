import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad as _quad

from nanorod import geometry as g


class TestNanorod:
    def test_perimeter_exact(self):
        geom, quad = g.build_nanorod(1.0, 0.1, 512)
        assert geom.perimeter == pytest.approx(2 + 0.2 * np.pi, abs=1e-14)
        assert quad.weights.sum() == pytest.approx(geom.perimeter, rel=1e-12)

    def test_unit_normals(self):
        _, quad = g.build_nanorod(1.0, 0.05, 512)
        assert np.max(np.abs(np.hypot(*quad.normals.T) - 1.0)) < 1e-12

    def test_curvature_values(self):
        _, quad = g.build_nanorod(1.0, 0.05, 512)
        flats = quad.parts % 2 == 0
        assert np.all(quad.curvatures[flats] == 0.0)
        assert np.all(quad.curvatures[~flats] == pytest.approx(20.0, rel=1e-14))

    def test_flat_nodes_exact_height(self):
        geom, quad = g.build_nanorod(1.0, 0.05, 512)
        flats = quad.parts % 2 == 0
        assert set(np.unique(quad.nodes[flats][:, 1])) == {-0.05, 0.05}

    def test_signed_area(self):
        geom, quad = g.build_nanorod(1.3, 0.07, 512)
        assert g.signed_area(quad) == pytest.approx(geom.area, rel=1e-8)

    def test_normals_point_outward(self):
        geom, quad = g.build_nanorod(1.0, 0.08, 256)
        outside = quad.nodes + 1e-6 * quad.normals
        # outside points must not be in the stadium
        x1 = np.clip(outside[:, 0], -geom.L / 2, geom.L / 2)
        dist = np.hypot(outside[:, 0] - x1, outside[:, 1])
        assert np.all(dist > geom.delta)

    def test_counterclockwise_order(self):
        _, quad = g.build_nanorod(1.0, 0.1, 256)
        x, t = quad.nodes, quad.tangents()
        # discrete forward differences align with tangents
        d = np.roll(x, -1, axis=0) - x
        assert np.all(np.einsum("ij,ij->i", d, t) > 0)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            g.build_nanorod(1.0, 0.6, 256)
        with pytest.raises(ValueError):
            g.build_nanorod(1.0, 0.5, 256)
        with pytest.raises(ValueError):
            g.build_nanorod(-1.0, 0.1, 256)
        with pytest.raises(ValueError):
            g.build_nanorod(1.0, 0.0, 256)

    def test_min_nodes_per_part(self):
        _, quad = g.build_nanorod(1.0, 0.01, 128)
        for part in range(4):
            assert np.sum(quad.parts == part) >= 16

    def test_panels_do_not_straddle_junctions(self):
        geom, quad = g.build_nanorod(1.0, 0.05, 512)
        for p in quad.panels:
            assert 0.0 <= p.s0 < p.s1 <= geom.part_length(p.part) + 1e-14
            assert len(set(quad.parts[p.i0 : p.i1])) == 1

    def test_reflection_symmetry_of_nodes(self):
        _, quad = g.build_nanorod(1.0, 0.05, 512)
        for axis in (0, 1):
            m = g.reflection_map(quad, axis)
            assert m is not None
            mirrored = quad.nodes[m]
            assert np.max(np.abs(mirrored[:, axis] + quad.nodes[:, axis])) < 1e-12
            assert np.max(np.abs(mirrored[:, 1 - axis] - quad.nodes[:, 1 - axis])) < 1e-12

    def test_radial_exit_lands_on_boundary(self):
        geom, _ = g.build_nanorod(1.0, 0.05, 128)
        th = np.linspace(0, 2 * np.pi, 81)
        rho = geom.radial_exit(th)
        p = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)
        x1c = np.clip(p[:, 0], -0.5, 0.5)
        assert np.max(np.abs(np.hypot(p[:, 0] - x1c, p[:, 1]) - geom.delta)) < 1e-12


class TestValidationShapes:
    def test_disk_circumference(self):
        _, quad = g.build_disk(1.0, 256)
        assert quad.weights.sum() == pytest.approx(2 * np.pi, abs=1e-12)

    def test_degenerate_ellipse_is_disk(self):
        _, qd = g.build_disk(1.0, 64)
        _, qe = g.build_ellipse(1.0, 1.0, 64)
        assert np.allclose(qd.nodes, qe.nodes, atol=1e-15)
        assert np.allclose(qd.weights, qe.weights, atol=1e-15)

    def test_ellipse_arclength_matches_adaptive_integral(self):
        a, b = 2.0, 1.0
        _, quad = g.build_ellipse(a, b, 512)
        ref = _quad(lambda t: np.hypot(a * np.sin(t), b * np.cos(t)), 0, 2 * np.pi, limit=200)[0]
        assert quad.weights.sum() == pytest.approx(ref, abs=1e-10)

    def test_rejects_bad_axes(self):
        with pytest.raises(ValueError):
            g.build_disk(-1.0, 64)
        with pytest.raises(ValueError):
            g.build_ellipse(1.0, 0.0, 64)
        with pytest.raises(ValueError):
            g.build_disk(1.0, 8)

    def test_disk_curvature_and_normals(self):
        _, quad = g.build_disk(2.0, 64)
        assert np.allclose(quad.curvatures, 0.5, atol=1e-14)
        assert np.allclose(quad.normals, quad.nodes / 2.0, atol=1e-14)


class TestSpineProjection:
    def test_flat_side(self):
        geom = g.NanorodGeometry(1.0, 0.1)
        assert np.allclose(g.project_to_spine(geom, np.array([0.3, 0.1])), [0.3, 0.0])

    def test_cap_projects_to_endpoint(self):
        geom = g.NanorodGeometry(1.0, 0.1)
        th = np.pi / 2 + np.linspace(0.01, np.pi - 0.01, 7)
        x = np.array([-0.5, 0.0]) + 0.1 * np.stack([np.cos(th), np.sin(th)], axis=-1)
        z = g.project_to_spine(geom, x)
        assert np.allclose(z, [-0.5, 0.0])

    def test_junction(self):
        geom = g.NanorodGeometry(1.0, 0.1)
        assert np.allclose(g.project_to_spine(geom, np.array([0.5, 0.1])), [0.5, 0.0])

    @given(
        x1=st.floats(-2.0, 2.0),
        x2=st.floats(-0.2, 0.2),
        L=st.floats(0.5, 3.0),
    )
    def test_clamp_property(self, x1, x2, L):
        geom = g.NanorodGeometry(L, 0.05)
        z = g.project_to_spine(geom, np.array([x1, x2]))
        assert z[1] == 0.0
        assert -L / 2 <= z[0] <= L / 2
        if abs(x1) <= L / 2:
            assert z[0] == x1


def test_panel_rule_order_controls_integration_error():
    # smooth non-polynomial integrand at a fixed node budget; raising the
    # Gauss order must buy orders of magnitude (default order 16 is exact
    # to roundoff, so the visible comparison runs at low orders)
    def integral(quad):
        f = np.exp(np.sin(9 * quad.nodes[:, 0]) + quad.nodes[:, 1])
        return float(np.sum(f * quad.weights))

    _, ref_quad = g.build_nanorod(1.0, 0.1, 4096)
    ref = integral(ref_quad)
    errs = {}
    for order in (2, 4):
        _, quad = g.build_nanorod(1.0, 0.1, 1024, panel_order=order)
        errs[order] = abs(integral(quad) - ref) / abs(ref)
    assert errs[2] > 100 * errs[4]
    assert errs[4] < 1e-10
    _, quad16 = g.build_nanorod(1.0, 0.1, 1024)
    assert abs(integral(quad16) - ref) / abs(ref) < 1e-12
