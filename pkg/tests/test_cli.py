"""Config parsing (line-aware errors, block exclusivity, defaults echo)
and the artifact contract of every subcommand: CSV schema, JSON summary,
plot data, exit codes, and bit-identical reruns."""
import json
import os

import numpy as np
import pytest

from nanorod import cli
from nanorod.config import ConfigError, parse_config

DISK_SCATTER = "radius=1\nresolution=128\neps_re=4\nomega=0.3\nd=1,0\neval_count=8\ncompute_volume=false\n"


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class TestParsing:
    def test_happy_path_scatter(self):
        rc = parse_config(
            "L=1\ndelta=0.05\nomega=0.01\nd=1,0\neps_re=-9.1\neps_im=0.1", "scatter"
        )
        assert rc.geometry_kind == "stadium"
        assert rc.eps_c == -9.1 + 0.1j
        assert rc.settings["omega"] == 0.01
        assert rc.settings["d"] == (1.0, 0.0)

    def test_comments_and_blank_lines(self):
        rc = parse_config("# a comment\n\nradius=1  # trailing\n", "spectrum")
        assert rc.geometry_kind == "disk"

    def test_degenerate_stadium_rejected_with_line(self):
        with pytest.raises(ConfigError, match="line 1.*delta = 0.6.*L/2"):
            parse_config("delta=0.6\nL=1", "scatter")

    def test_epsilon_near_zero_target_rejected(self):
        with pytest.raises(ConfigError, match="epsilon-near-zero"):
            parse_config("lambda_target=0.5", "scatter")

    def test_unknown_key_with_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'bogus'"):
            parse_config("radius=1\nbogus=3", "spectrum")

    def test_type_error_with_line(self):
        with pytest.raises(ConfigError, match="line 1: expected float for 'omega'"):
            parse_config("omega=fast", "scatter")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate key 'L'"):
            parse_config("L=1\ndelta=0.05\nL=2", "spectrum")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="expected key=value"):
            parse_config("radius 1", "spectrum")

    def test_geometry_blocks_are_exclusive(self):
        with pytest.raises(ConfigError, match="line 3: exactly one geometry block"):
            parse_config("radius=1\nL=1\ndelta=0.05", "spectrum")

    def test_geometry_required(self):
        with pytest.raises(ConfigError, match="missing geometry block"):
            parse_config("eps_re=4\nomega=0.3", "scatter")

    def test_material_blocks_are_exclusive(self):
        text = "radius=1\neps_re=4\nlambda_target=0.4\nrho=-0.01\nomega=0.3"
        with pytest.raises(ConfigError, match="exactly one material block"):
            parse_config(text, "scatter")

    def test_lambda_target_requires_rho(self):
        with pytest.raises(ConfigError, match="lambda_target requires rho"):
            parse_config("radius=1\nlambda_target=0.4\nomega=0.3", "scatter")

    def test_rho_requires_lambda_target(self):
        with pytest.raises(ConfigError, match="rho requires lambda_target"):
            parse_config("radius=1\nrho=-0.01\nomega=0.3", "scatter")

    def test_positive_rho_rejected(self):
        with pytest.raises(ConfigError, match="lossy convention"):
            parse_config("L=1\ndelta=0.05\nlambda_target=0.4\nrho=0.01\nomega=0.01", "scatter")

    def test_unit_permittivity_rejected(self):
        with pytest.raises(ConfigError, match="differ from 0 and 1"):
            parse_config("radius=1\neps_re=1\nomega=0.3", "scatter")

    def test_direction_normalized(self):
        rc = parse_config("radius=1\neps_re=4\nomega=0.3\nd=3,4", "scatter")
        assert rc.settings["d"] == pytest.approx((0.6, 0.8))

    def test_zero_direction_rejected(self):
        with pytest.raises(ConfigError, match="nonzero direction"):
            parse_config("radius=1\neps_re=4\nomega=0.3\nd=0,0", "scatter")

    def test_keys_scoped_to_subcommand(self):
        with pytest.raises(ConfigError, match="does not apply to 'scatter'"):
            parse_config("radius=1\neps_re=4\nomega=0.3\nrho_count=5", "scatter")

    def test_defaults_recorded(self):
        rc = parse_config("radius=1", "spectrum")
        assert rc.settings["resolution"] == 512
        assert rc.settings["n_modes"] == 40
        assert rc.settings["csv_significant_digits"] == 17
        assert "resolution" not in rc.given
        # spectrum settings carry no sweep or field-evaluation knobs
        assert "c1" not in rc.settings
        assert "eval_radius" not in rc.settings

    def test_resonant_material_synthesized(self):
        rc = parse_config(
            "L=1\ndelta=0.05\nlambda_target=0.4\nrho=-0.01\nomega=0.01", "scatter"
        )
        assert rc.eps_c == pytest.approx(1.0 / complex(-9.1, -0.01), rel=1e-12)

    def test_sweep_preset(self):
        rc = parse_config("preset=rho-scan", "resonance-sweep")
        s = rc.settings
        assert s["L"] == 1.0 and s["delta"] == 0.05
        assert s["rho_count"] == 5
        assert s["c1"] == 1.0
        assert s["omega"] == 1e-2

    def test_sweep_preset_overridable(self):
        rc = parse_config("preset=rho-scan\nresolution=128", "resonance-sweep")
        assert rc.settings["resolution"] == 128

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="only sweep preset"):
            parse_config("preset=fast", "resonance-sweep")

    def test_sweep_theta_and_target_conflict(self):
        with pytest.raises(ConfigError, match="either theta"):
            parse_config("theta=0.25\nlambda_target=0.4", "resonance-sweep")

    def test_sweep_defaults_to_stadium(self):
        rc = parse_config("", "resonance-sweep")
        assert rc.geometry_kind == "stadium"
        assert rc.settings["L"] == 1.0

    def test_asymptotic_requires_stadium(self):
        with pytest.raises(ConfigError, match="requires the stadium"):
            parse_config("radius=1\neps_re=4\nomega=0.01", "asymptotic")

    def test_bad_subcommand(self):
        with pytest.raises(ConfigError, match="unknown subcommand"):
            parse_config("radius=1", "mesh")

    def test_loss_grid_ordering(self):
        with pytest.raises(ConfigError, match="rho_abs_min <= rho_abs_max"):
            parse_config("rho_abs_min=0.1\nrho_abs_max=0.001", "resonance-sweep")


@pytest.fixture(scope="module")
def spectrum_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("spectrum")
    rc = parse_config("radius=1\nresolution=128\nn_modes=6", "spectrum")
    assert cli.run(rc.with_out_dir(out)) == 0
    return out


@pytest.fixture(scope="module")
def scatter_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("scatter")
    assert cli.run(parse_config(DISK_SCATTER, "scatter").with_out_dir(out)) == 0
    return out


@pytest.fixture(scope="module")
def asymptotic_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("asymptotic")
    text = (
        "L=1\ndelta=0.05\nresolution=256\neps_re=-0.1\n"
        "omega=0.01\nd=0,1\neval_count=8\ngrid_1d=96"
    )
    assert cli.run(parse_config(text, "asymptotic").with_out_dir(out)) == 0
    return out


class TestSpectrumRun:
    def test_csv_schema(self, spectrum_out):
        lines = (spectrum_out / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "j [index],lambda_j [1],a_j [1],parity [x1x2]"
        assert len(lines) == 7
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == pytest.approx(0.5, abs=1e-8)
        assert float(first[2]) == pytest.approx(-1.0)

    def test_plot_data(self, spectrum_out):
        lines = (spectrum_out / "spectrum_modes.dat").read_text().splitlines()
        assert lines[0].startswith("#")
        assert len(lines[1].split()) == 2

    def test_json_summary(self, spectrum_out):
        doc = read_json(spectrum_out / "spectrum.json")
        assert doc["subcommand"] == "spectrum"
        assert doc["inputs"]["resolution"] == 128
        assert "resolution" not in doc["defaulted"]
        assert "panel_order" in doc["defaulted"]
        assert doc["diagnostics"]["calderon_residual"] < 1e-6
        assert doc["wall_time_s"] > 0
        assert doc["timestamp_utc"].endswith("Z")
        assert set(doc["artifacts"]) == {"spectrum.csv", "spectrum_modes.dat"}


class TestScatterRun:
    def test_csv_schema(self, scatter_out):
        lines = (scatter_out / "scatter.csv").read_text().splitlines()
        assert lines[0].split(",")[0] == "x1 [length]"
        assert len(lines) == 9
        row = [float(v) for v in lines[1].split(",")]
        assert np.hypot(row[0], row[1]) == pytest.approx(2.0)
        # scattered plus incident equals total
        inc = np.exp(1j * 0.3 * row[0])
        assert complex(row[4], row[5]) == pytest.approx(complex(row[2], row[3]) + inc)

    def test_json_diagnostics(self, scatter_out):
        doc = read_json(scatter_out / "scatter.json")
        assert doc["derived"]["eps_c"] == {"re": 4.0, "im": 0.0}
        assert doc["diagnostics"]["condition_estimate"] > 1.0
        assert "gradient_norm_volume" not in doc["diagnostics"]

    def test_plot_files(self, scatter_out):
        for name in ("scatter_ring.dat", "scatter_farfield.dat"):
            lines = (scatter_out / name).read_text().splitlines()
            assert lines[0].startswith("#")
            assert len(lines) == 9

    def test_rerun_is_bit_identical(self, scatter_out, tmp_path):
        rc = parse_config(DISK_SCATTER, "scatter").with_out_dir(tmp_path)
        assert cli.run(rc) == 0
        for name in ("scatter.csv", "scatter_ring.dat", "scatter_farfield.dat"):
            assert (tmp_path / name).read_bytes() == (scatter_out / name).read_bytes()


class TestAsymptoticRun:
    def test_artifacts(self, asymptotic_out):
        doc = read_json(asymptotic_out / "asymptotic.json")
        assert doc["derived"]["grid_1d_nodes"] == 96
        assert doc["derived"]["sheet_coefficient"]["im"] != 0.0
        for name in doc["artifacts"]:
            assert (asymptotic_out / name).exists()
        assert "asymptotic_density.dat" in doc["artifacts"]

    def test_moment_diagnostics(self, asymptotic_out):
        doc = read_json(asymptotic_out / "asymptotic.json")
        for order in (0, 1, 2):
            assert 0 < doc["diagnostics"][f"moment_error_order_{order}"] < 1

    def test_flat_profile_positive(self, asymptotic_out):
        rows = (asymptotic_out / "asymptotic_flat_real.dat").read_text().splitlines()[1:]
        values = np.array([[float(v) for v in r.split()] for r in rows])
        assert values.shape == (96, 2)
        assert np.all(values[:, 1] > 0)

    def test_runtime_failure_reports_json(self, tmp_path):
        text = (
            "L=1\ndelta=0.05\nresolution=256\neps_re=-0.1\n"
            "omega=0.01\nd=0,1\neval_radius=0.04\neval_count=4"
        )
        code = cli.run(parse_config(text, "asymptotic").with_out_dir(tmp_path))
        assert code == 1
        doc = read_json(tmp_path / "asymptotic.json")
        assert doc["error"]["type"] == "ValueError"
        assert "rod neighborhood" in doc["error"]["message"]


class TestSweepRun:
    def test_matched_sweep_artifacts(self, tmp_path):
        text = (
            "lambda_target=0.41\nrho_count=3\nresolution=128\n"
            "compute_volume=false\nc1=1.0"
        )
        rc = parse_config(text, "resonance-sweep").with_out_dir(tmp_path)
        assert cli.run(rc) == 0
        lines = (tmp_path / "resonance_sweep.csv").read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].split(",")[0] == "rho [1]"
        j_star = [int(r.split(",")[9]) for r in lines[1:]]
        assert j_star == [2, 2, 2]
        doc = read_json(tmp_path / "resonance_sweep.json")
        assert doc["derived"]["mode"] == "matched resonance"
        # three points cannot support a slope fit
        assert doc["derived"]["fits"]["rho"] is None
        assert (tmp_path / "sweep_norms.dat").exists()

    def test_control_sweep_mode(self, tmp_path):
        text = "theta=0.25\nrho_count=3\nresolution=128\ncompute_volume=false"
        rc = parse_config(text, "resonance-sweep").with_out_dir(tmp_path)
        assert cli.run(rc) == 0
        doc = read_json(tmp_path / "resonance_sweep.json")
        assert doc["derived"]["mode"] == "control (fixed theta)"
        eps_re = [
            float(r.split(",")[2])
            for r in (tmp_path / "resonance_sweep.csv").read_text().splitlines()[1:]
        ]
        assert all(v > 0 for v in eps_re)


class TestValidateRun:
    def test_disk_defaults_pass(self, tmp_path):
        rc = parse_config("resolution=128", "validate").with_out_dir(tmp_path)
        assert cli.run(rc) == 0
        lines = (tmp_path / "validate.csv").read_text().splitlines()
        names = [r.split(",")[0] for r in lines[1:]]
        assert names == [
            "calderon_identity",
            "jump_relation_exterior",
            "jump_relation_interior",
            "disk_series_mismatch",
        ]
        assert all(r.split(",")[3] == "pass" for r in lines[1:])
        doc = read_json(tmp_path / "validate.json")
        assert doc["derived"]["all_checks_pass"] is True
        assert doc["diagnostics"]["disk_series_mismatch"] < 1e-6
        assert (tmp_path / "validate_mismatch.dat").exists()

    def test_coarse_stadium_fails_threshold(self, tmp_path):
        rc = parse_config("L=1\ndelta=0.05\nresolution=256", "validate")
        assert cli.run(rc.with_out_dir(tmp_path)) == 1
        lines = (tmp_path / "validate.csv").read_text().splitlines()
        statuses = {r.split(",")[0]: r.split(",")[3] for r in lines[1:]}
        assert statuses["calderon_identity"] == "fail"
        doc = read_json(tmp_path / "validate.json")
        assert doc["derived"]["all_checks_pass"] is False


class TestMain:
    def test_end_to_end(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("radius=1\nresolution=128\nn_modes=4\n")
        code = cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "spectrum.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("delta=0.6\nL=1\n")
        assert cli.main(["scatter", "--config", str(cfg)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert cli.main(["spectrum", "--config", str(tmp_path / "nope.cfg")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_out_key_in_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        out = tmp_path / "from_key"
        cfg.write_text(f"radius=1\nresolution=128\nn_modes=4\nout={out}\n")
        assert cli.main(["spectrum", "--config", str(cfg)]) == 0
        assert (out / "spectrum.json").exists()

    def test_thread_override_applied(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NANOROD_THREADS", "2")
        for var in cli._THREAD_VARS:
            monkeypatch.delenv(var, raising=False)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("radius=1\nresolution=128\nn_modes=4\n")
        assert cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert os.environ["OMP_NUM_THREADS"] == "2"

    def test_thread_override_validated(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("NANOROD_THREADS", "many")
        cfg = tmp_path / "run.cfg"
        cfg.write_text("radius=1\n")
        assert cli.main(["spectrum", "--config", str(cfg)]) == 2
        assert "NANOROD_THREADS" in capsys.readouterr().err
