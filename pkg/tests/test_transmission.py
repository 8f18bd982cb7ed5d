"""Transmission solver against the separation-of-variables disk oracle,
internal block/reduced cross-checks, and exterior energy norms."""
import warnings

import mie_series
import numpy as np
import pytest

from nanorod import geometry as g
from nanorod import layers as ly
from nanorod import spectral as sp
from nanorod import transmission as tr


@pytest.fixture(scope="module")
def disk():
    return g.build_disk(1.0, n=512)[1]


@pytest.fixture(scope="module")
def disk_mie(disk):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", tr.RegimeWarning)
        cfg = tr.ScatterConfig(disk, 4.0, 0.5, (1.0, 0.0))
    return tr.assemble_and_solve(cfg)


@pytest.fixture(scope="module")
def disk_quasi(disk):
    cfg = tr.ScatterConfig(disk, 4.0, 0.3, (1.0, 0.0))
    return tr.assemble_and_solve(cfg)


@pytest.fixture(scope="module")
def stadium():
    return g.build_nanorod(1.0, 0.05, resolution=768)[1]


@pytest.fixture(scope="module")
def stadium_sol(stadium):
    cfg = tr.ScatterConfig(stadium, 4.0, 0.01, (0.0, 1.0))
    return tr.assemble_and_solve(cfg)


def ring(radius, count):
    th = np.linspace(0, 2 * np.pi, count, endpoint=False)
    return radius * np.stack([np.cos(th), np.sin(th)], axis=1)


class TestConfig:
    def test_direction_must_be_unit(self, disk):
        with pytest.raises(ValueError, match="unit vector"):
            tr.ScatterConfig(disk, 4.0, 0.3, (1.0, 0.5))

    def test_omega_must_be_positive(self, disk):
        with pytest.raises(ValueError, match="omega"):
            tr.ScatterConfig(disk, 4.0, -0.3, (1.0, 0.0))

    def test_eps_zero_rejected(self, disk):
        with pytest.raises(ValueError, match="eps_c"):
            tr.ScatterConfig(disk, 0.0, 0.3, (1.0, 0.0))

    def test_regime_warning_outside_quasi_static(self, disk):
        with pytest.warns(tr.RegimeWarning):
            tr.ScatterConfig(disk, 4.0, 0.5, (1.0, 0.0))

    def test_interior_wavenumber_branch(self, disk):
        cfg = tr.ScatterConfig(disk, -2.0 + 0.0j, 0.1, (1.0, 0.0))
        assert cfg.k_c.imag > 0

    def test_incident_plane_wave(self, disk):
        cfg = tr.ScatterConfig(disk, 4.0, 0.3, (0.0, 1.0))
        x = np.array([[0.4, -0.7]])
        assert cfg.incident(x)[0] == pytest.approx(np.exp(1j * 0.3 * -0.7), abs=1e-15)
        grad = cfg.incident_gradient(x)[0]
        assert grad[0] == 0
        assert grad[1] == pytest.approx(1j * 0.3 * np.exp(1j * 0.3 * -0.7), abs=1e-15)


class TestDiskOracle:
    def test_exterior_near_field_matches_series(self, disk, disk_mie):
        targets = ring(2.0, 64)
        fs = tr.evaluate_fields(disk_mie, targets)
        ref = mie_series.field(4.0, 0.5, 1.0, (1.0, 0.0), targets, nmax=20)
        rel = np.max(np.abs(fs.u - ref)) / np.max(np.abs(ref))
        assert rel < 1e-6
        assert rel < 1e-12  # frozen: solver and series agree near machine level

    def test_interior_field_matches_series(self, disk, disk_mie):
        targets = ring(0.5, 48)
        fs = tr.evaluate_fields(disk_mie, targets)
        assert not fs.exterior.any()
        ref = mie_series.field(4.0, 0.5, 1.0, (1.0, 0.0), targets, nmax=20)
        rel = np.max(np.abs(fs.u - ref)) / np.max(np.abs(ref))
        assert rel < 1e-6
        assert rel < 1e-12

    def test_block_solve_diagnostics(self, disk_mie):
        assert disk_mie.residual < 1e-13
        assert disk_mie.condition < 1e6
        assert disk_mie.psi.tag == "exterior density"

    def test_no_contrast_scatters_nothing(self, disk):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", tr.RegimeWarning)
            cfg = tr.ScatterConfig(disk, 1.0, 0.5, (1.0, 0.0))
        sol = tr.assemble_and_solve(cfg)
        contrib = ly.evaluate_potential(disk, sol.psi, 0.5, ring(2.0, 16))
        assert np.max(np.abs(contrib)) < 1e-8

    def test_reciprocity_of_far_field(self, disk):
        th_obs = 2.1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", tr.RegimeWarning)
            cfg_fwd = tr.ScatterConfig(disk, 4.0, 0.5, (1.0, 0.0))
            cfg_rev = tr.ScatterConfig(disk, 4.0, 0.5, (-np.cos(th_obs), -np.sin(th_obs)))
        amp_fwd = tr.far_field_amplitude(tr.assemble_and_solve(cfg_fwd), [th_obs])[0]
        amp_rev = tr.far_field_amplitude(tr.assemble_and_solve(cfg_rev), [np.pi])[0]
        assert abs(amp_fwd - amp_rev) / abs(amp_fwd) < 1e-6

    def test_far_field_amplitude_is_asymptotic_limit(self, disk_mie):
        th = np.array([0.3, 2.0, 4.4])
        amp = tr.far_field_amplitude(disk_mie, th)
        devs = []
        for radius in (200.0, 800.0):
            fs = tr.evaluate_fields(disk_mie, ring(radius, 3) * 0 + radius *
                                    np.stack([np.cos(th), np.sin(th)], axis=1))
            approx = amp * np.exp(1j * 0.5 * radius) / np.sqrt(radius)
            devs.append(np.max(np.abs(fs.u_s - approx) / np.abs(approx)))
        assert devs[0] < 1e-2
        assert devs[1] < 0.35 * devs[0]  # O(1/R) correction


class TestReducedForm:
    def test_matches_block_on_disk(self, disk, disk_quasi):
        cfg = disk_quasi.config
        psi_red = tr.reduced_operator(cfg).solve()
        rel = np.linalg.norm(psi_red.values - disk_quasi.psi.values)
        rel /= np.linalg.norm(disk_quasi.psi.values)
        assert rel < 1e-6
        assert rel < 1e-9

    def test_matches_block_across_random_configs(self, disk, stadium):
        rng = np.random.default_rng(7)
        quads = [disk, disk, disk, disk, stadium]
        for quad in quads:
            # complex contrast assembles through the small-k series, so stay
            # inside its domain |k_c| * diam < 1
            eps = rng.uniform(1.5, 6.0) + 1j * rng.uniform(0.0, 0.8)
            omega = rng.uniform(0.03, 0.15)
            ang = rng.uniform(0, 2 * np.pi)
            cfg = tr.ScatterConfig(quad, eps, omega, (np.cos(ang), np.sin(ang)))
            sol = tr.assemble_and_solve(cfg)
            psi_red = tr.reduced_operator(cfg).solve()
            rel = np.linalg.norm(psi_red.values - sol.psi.values)
            rel /= np.linalg.norm(sol.psi.values)
            assert rel < 1e-6

    def test_static_limit_rate(self, disk):
        a0 = tr.static_operator(disk, 4.0).matrix
        oms = np.logspace(-2.5, -1.0, 6)
        devs = [np.linalg.norm(tr.reduced_operator(
            tr.ScatterConfig(disk, 4.0, om, (1.0, 0.0))).operator.matrix - a0, 2)
            for om in oms]
        ratios = np.array(devs) / (oms ** 2 * np.abs(np.log(oms)))
        assert ratios.max() / ratios.min() < 1.5  # omega^2 ln omega scaling holds

    def test_static_operator_is_identity_without_contrast(self, disk):
        a0 = tr.static_operator(disk, 1.0).matrix
        assert np.max(np.abs(a0 - np.eye(disk.n))) == 0.0

    def test_ill_conditioned_resonance_reported(self, disk):
        # lossless eps = -1 sits on the plasmonic eigenvalue at 0
        cfg = tr.ScatterConfig(disk, -1.0, 1e-6, (1.0, 0.0))
        with pytest.warns(tr.ConditionWarning):
            sol = tr.assemble_and_solve(cfg)
        assert sol.condition > 1e12

    def test_mesh_convergence_of_density_norm(self):
        norms = []
        for n in (512, 1024):
            quad = g.build_nanorod(1.0, 0.05, resolution=n)[1]
            cfg = tr.ScatterConfig(quad, 4.0, 0.01, (0.0, 1.0))
            sol = tr.assemble_and_solve(cfg)
            norms.append(np.sqrt(np.sum(quad.weights * np.abs(sol.psi.values) ** 2)))
        assert abs(norms[1] - norms[0]) / norms[1] < 1e-4


class TestFields:
    def test_continuity_across_boundary(self, disk, disk_mie):
        # cubic one-sided extrapolation from both sides onto the boundary
        idx = np.arange(0, disk.n, 37)
        x0, nu = disk.nodes[idx], disk.normals[idx]
        h = 0.05
        coef = np.array([4.0, -6.0, 4.0, -1.0])
        outer = np.zeros(len(idx), dtype=complex)
        inner = np.zeros(len(idx), dtype=complex)
        for j, cj in enumerate(coef, start=1):
            outer += cj * tr.evaluate_fields(disk_mie, x0 + j * h * nu).u
            inner += cj * tr.evaluate_fields(disk_mie, x0 - j * h * nu).u
        mismatch = np.max(np.abs(outer - inner)) / np.max(np.abs(inner))
        assert mismatch < 1e-4

    def test_no_contrast_total_field_is_incident(self, disk):
        cfg = tr.ScatterConfig(disk, 1.0, 0.3, (0.6, 0.8))
        sol = tr.assemble_and_solve(cfg)
        targets = np.array([[1.7, 0.3], [-0.4, 0.1], [0.0, -2.5], [0.2, 0.6]])
        fs = tr.evaluate_fields(sol, targets)
        assert np.max(np.abs(fs.u - cfg.incident(targets))) < 1e-8
        assert np.max(np.abs(fs.u_s)) < 1e-8

    def test_radiation_condition_decay(self, disk_quasi):
        omega = disk_quasi.config.omega
        resid = []
        for radius in (20.0, 40.0):
            targets = ring(radius, 32)
            fs = tr.evaluate_fields(disk_quasi, targets)
            dr = np.einsum("tc,tc->t", fs.grad_u_s, targets / radius)
            resid.append(np.max(np.sqrt(radius) * np.abs(dr - 1j * omega * fs.u_s)))
        assert 0.35 < resid[1] / resid[0] < 0.65  # ~ 1/R

    def test_exterior_mask_stadium(self, stadium):
        pts = np.array([[0.0, 0.0], [0.54, 0.0], [0.56, 0.0], [0.0, 0.06], [3.0, 1.0]])
        assert list(tr.exterior_mask(stadium, pts)) == [False, False, True, True, True]

    def test_distance_guard_applies(self, disk, disk_quasi):
        near = np.array([[1.0 + 1e-4, 0.0]])
        with pytest.raises(ValueError, match="local node spacing"):
            tr.evaluate_fields(disk_quasi, near)
        fs = tr.evaluate_fields(disk_quasi, near, enforce_distance=False)
        assert np.isfinite(fs.u[0].real)


class TestGradientNorm:
    def test_volume_norm_matches_series_energy(self, disk, disk_quasi):
        vn = tr.gradient_norm(disk_quasi)
        ref = mie_series.exterior_energy(4.0, 0.3, 1.0, 1.0 + vn.collar_min, vn.radius)
        assert abs(vn.value - ref) / ref < 0.02
        assert abs(vn.value - ref) / ref < 1e-5  # frozen headroom
        assert not vn.coarse
        assert vn.tail_estimate > 0

    def test_no_contrast_both_norms_vanish(self, disk):
        cfg = tr.ScatterConfig(disk, 1.0, 0.3, (1.0, 0.0))
        sol = tr.assemble_and_solve(cfg)
        spec = sp.np_spectrum(disk, n_modes=12)
        assert tr.gradient_norm(sol, q_theta=6, n_arc_panels=6).value < 1e-8
        assert tr.gradient_norm_boundary(sol, spec) < 1e-8

    def test_bracket_against_boundary_norm_as_radius_doubles(self, disk, disk_quasi):
        spec = sp.np_spectrum(disk, n_modes=40)
        bn = tr.gradient_norm_boundary(disk_quasi, spec)
        ratios = [tr.gradient_norm(disk_quasi, R=radius).value / bn
                  for radius in (10.0, 20.0, 40.0)]
        assert all(1.0 / 3.0 < r < 3.0 for r in ratios)
        assert ratios[0] == pytest.approx(0.8156, abs=0.02)  # frozen

    def test_energy_discrepancy_decays_in_omega(self, disk):
        spec = sp.np_spectrum(disk, n_modes=40)
        oms = np.logspace(-2.0, -1.0, 5)
        disc = []
        for om in oms:
            sol = tr.assemble_and_solve(tr.ScatterConfig(disk, 4.0, om, (1.0, 0.0)))
            v = tr.gradient_norm(sol, n_arc_panels=8, q_theta=8).value
            b = tr.gradient_norm_boundary(sol, spec)
            disc.append(abs(v ** 2 - b ** 2))
        slope = np.polyfit(np.log(oms), np.log(disc), 1)[0]
        assert slope > 1.7

    def test_coarse_grid_flagged(self, stadium_sol):
        with pytest.warns(UserWarning, match="exceeds 5%"):
            vn = tr.gradient_norm(stadium_sol, n_arc_panels=2, q_theta=2, p_radial=4)
        assert vn.coarse

    def test_stadium_volume_norm_stable_default_grid(self, stadium_sol):
        vn = tr.gradient_norm(stadium_sol)
        assert vn.grid_error < 0.05
        assert vn.value == pytest.approx(1.816246e-3, rel=1e-3)  # frozen

    def test_truncation_radius_must_clear_collar(self, stadium_sol):
        with pytest.raises(ValueError, match="truncation radius"):
            tr.gradient_norm(stadium_sol, R=0.5)
