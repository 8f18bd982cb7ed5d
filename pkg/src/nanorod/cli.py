"""Command line entry: parse a run configuration, execute the subcommand,
and persist the results as CSV, a JSON summary, and plot-ready data files.

Heavy numeric modules are imported inside the runners so the thread-count
environment override can take effect before any BLAS-backed library loads.
Data files carry no timestamps; identical configurations reproduce them
byte for byte. Wall time and the run timestamp live in the JSON only.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .config import SUBCOMMANDS, ConfigError, RunConfig, parse_config

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_override():
    count = os.environ.get("NANOROD_THREADS")
    if count is None:
        return
    if not count.isdigit() or int(count) < 1:
        raise ConfigError("NANOROD_THREADS must be a positive integer")
    for var in _THREAD_VARS:
        os.environ[var] = count


def _fmt(value):
    return format(float(value), ".17g")


def _slug(subcommand):
    return subcommand.replace("-", "_")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_plot(path, label, xs, ys):
    lines = [f"# {label}"]
    lines.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in zip(xs, ys))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path, payload):
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
        encoding="utf-8",
    )


def _echo(rc: RunConfig):
    inputs = {
        key: (list(val) if isinstance(val, tuple) else val)
        for key, val in sorted(rc.settings.items())
    }
    return {
        "subcommand": rc.subcommand,
        "inputs": inputs,
        "defaulted": sorted(k for k in rc.settings if k not in rc.given),
        "artifacts": [],
    }


def _build_quadrature(rc: RunConfig):
    from . import geometry as geo

    s = rc.settings
    kind = s["geometry"]
    if kind == "stadium":
        return geo.build_nanorod(
            s["L"], s["delta"], resolution=s["resolution"], panel_order=s["panel_order"]
        )
    if kind == "disk":
        return geo.build_disk(s["radius"], n=s["resolution"])
    return geo.build_ellipse(s["a"], s["b"], n=s["resolution"])


def _ring(radius, count):
    import numpy as np

    angles = 2.0 * np.pi * np.arange(count) / count
    targets = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return angles, targets


def _run_spectrum(rc, out, payload):
    from . import spectral

    _, quad = _build_quadrature(rc)
    n_modes = min(rc.settings["n_modes"], quad.n)
    spec = spectral.np_spectrum(quad, n_modes=n_modes)
    csv_path = out / "spectrum.csv"
    header = ["j [index]", "lambda_j [1]", "a_j [1]", "parity [x1x2]"]
    rows = [
        [str(j), _fmt(spec.eigenvalues[j]), _fmt(spec.norms[j].real), spec.labels[j]]
        for j in range(len(spec))
    ]
    _write_csv(csv_path, header, rows)
    plot_path = out / "spectrum_modes.dat"
    _write_plot(
        plot_path, "mode index j vs eigenvalue lambda_j", range(len(spec)), spec.eigenvalues
    )
    payload["derived"] = {
        "n_nodes": quad.n,
        "n_modes": n_modes,
        "leading_mean_zero_eigenvalue": float(spec.eigenvalues[1]),
    }
    payload["diagnostics"] = {
        "calderon_residual": float(spec.calderon_residual),
        "near_degenerate_pairs": len(spec.near_degenerate),
    }
    payload["artifacts"] = [csv_path.name, plot_path.name]
    return 0


def _run_scatter(rc, out, payload):
    import numpy as np

    from . import transmission as tr

    s = rc.settings
    _, quad = _build_quadrature(rc)
    cfg = tr.ScatterConfig(quad, rc.eps_c, s["omega"], tuple(s["d"]))
    sol = tr.assemble_and_solve(cfg)
    angles, targets = _ring(s["eval_radius"], s["eval_count"])
    fields = tr.evaluate_fields(sol, targets)
    far = tr.far_field_amplitude(sol, angles)
    csv_path = out / "scatter.csv"
    header = [
        "x1 [length]",
        "x2 [length]",
        "re_u_scattered [field]",
        "im_u_scattered [field]",
        "re_u_total [field]",
        "im_u_total [field]",
    ]
    rows = [
        [
            _fmt(targets[i, 0]),
            _fmt(targets[i, 1]),
            _fmt(fields.u_s[i].real),
            _fmt(fields.u_s[i].imag),
            _fmt(fields.u[i].real),
            _fmt(fields.u[i].imag),
        ]
        for i in range(len(targets))
    ]
    _write_csv(csv_path, header, rows)
    ring_path = out / "scatter_ring.dat"
    _write_plot(
        ring_path,
        f"angle [rad] vs |u_scattered| on the radius-{s['eval_radius']:g} circle",
        angles,
        np.abs(fields.u_s),
    )
    far_path = out / "scatter_farfield.dat"
    _write_plot(far_path, "angle [rad] vs |far-field amplitude|", angles, np.abs(far))
    payload["derived"] = {
        "eps_c": complex(rc.eps_c),
        "interior_wavenumber": complex(cfg.k_c),
        "forward_far_field": complex(
            far[int(np.argmin(np.abs(np.exp(1j * angles) - complex(*s["d"]))))]
        ),
    }
    diag = {
        "condition_estimate": float(sol.condition),
        "linear_solve_residual": float(sol.residual),
        "boundary_density_max": float(np.max(np.abs(sol.psi.values))),
    }
    if s["compute_volume"]:
        vol = tr.gradient_norm(sol, R=s["R"], collar_factor=s["collar_factor"])
        diag["gradient_norm_volume"] = vol.value
        diag["gradient_norm_radius"] = vol.radius
        diag["gradient_norm_tail_estimate"] = vol.tail_estimate
    payload["diagnostics"] = diag
    payload["artifacts"] = [csv_path.name, ring_path.name, far_path.name]
    return 0


def _run_asymptotic(rc, out, payload):
    import numpy as np

    from . import asymptotics as asym
    from . import transmission as tr

    s = rc.settings
    op = asym.build_a_delta(
        s["L"], s["delta"], n=(s["grid_1d"] or None), panel_order=s["panel_order"]
    )
    field = asym.asymptotic_field(
        s["omega"], s["delta"], rc.eps_c, tuple(s["d"]), L=s["L"], op=op
    )
    angles, targets = _ring(s["eval_radius"], s["eval_count"])
    u_s = field.evaluate(targets)
    csv_path = out / "asymptotic.csv"
    header = [
        "x1 [length]",
        "x2 [length]",
        "re_u_asymptotic [field]",
        "im_u_asymptotic [field]",
    ]
    rows = [
        [
            _fmt(targets[i, 0]),
            _fmt(targets[i, 1]),
            _fmt(u_s[i].real),
            _fmt(u_s[i].imag),
        ]
        for i in range(len(targets))
    ]
    _write_csv(csv_path, header, rows)
    ring_path = out / "asymptotic_ring.dat"
    _write_plot(ring_path, "angle [rad] vs |u_asymptotic|", angles, np.abs(u_s))
    flat_re = out / "asymptotic_flat_real.dat"
    flat_im = out / "asymptotic_flat_imag.dat"
    _write_plot(flat_re, "x1 [length] vs Re flat density", op.grid, field.flat_trace.real)
    _write_plot(flat_im, "x1 [length] vs Im flat density", op.grid, field.flat_trace.imag)
    artifacts = [csv_path.name, ring_path.name, flat_re.name, flat_im.name]

    if s["geometry"] == "stadium":
        _, quad = _build_quadrature(rc)
        cfg = tr.ScatterConfig(quad, rc.eps_c, s["omega"], tuple(s["d"]))
        profile = asym.density_asymptotics(
            cfg, op, end_factor=s["end_factor"], normalized=s["cap_normalized"]
        )
        top = np.flatnonzero(profile.flat_top)
        top = top[np.argsort(quad.nodes[top, 0])]
        density_path = out / "asymptotic_density.dat"
        _write_plot(
            density_path,
            "x1 [length] vs |density| on the top flat face",
            quad.nodes[top, 0],
            np.abs(profile.values[top]),
        )
        artifacts.append(density_path.name)

    exponent = np.log(0.25) / np.log(s["delta"])
    payload["derived"] = {
        "eps_c": complex(rc.eps_c),
        "contrast_parameter": complex(field.lam),
        "sheet_coefficient": complex(field.sheet_coefficient),
        "end_coefficient": complex(field.end_coefficient),
        "grid_1d_nodes": op.n,
    }
    payload["diagnostics"] = {
        f"moment_error_order_{order}": float(asym.moment_check(op, order, exponent))
        for order in (0, 1, 2)
    }
    payload["artifacts"] = artifacts
    return 0


def _run_sweep(rc, out, payload):
    import numpy as np

    from . import resonance as rz

    s = rc.settings
    rhos = tuple(
        -np.logspace(
            np.log10(s["rho_abs_min"]), np.log10(s["rho_abs_max"]), s["rho_count"]
        )
    )
    plan = rz.SweepPlan(
        rhos=rhos,
        omegas=(s["omega"],),
        deltas=(s["delta"],),
        L=s["L"],
        resolution=s["resolution"],
        direction=tuple(s["d"]),
        lam_target=s.get("lambda_target"),
        theta=s.get("theta"),
        c1=s["c1"],
        n_modes=s["n_modes"],
        compute_volume=s["compute_volume"],
        volume_radius=s["R"],
        collar_factor=s["collar_factor"],
    )
    result = rz.resonance_sweep(plan)
    csv_path = out / "resonance_sweep.csv"
    header = [
        "rho [1]",
        "theta [1]",
        "eps_re [1]",
        "eps_im [1]",
        "grad_norm_volume [field]",
        "grad_norm_boundary [field]",
        "regime_value [1]",
        "regime_ok [0/1]",
        "condition_estimate [1]",
        "j_star [index]",
        "lambda_star [1]",
    ]
    rows = [
        [
            _fmt(r.rho),
            _fmt(r.theta),
            _fmt(r.eps_c.real),
            _fmt(r.eps_c.imag),
            _fmt(r.grad_volume),
            _fmt(r.grad_boundary),
            _fmt(r.regime_value),
            str(int(r.regime_ok)),
            _fmt(r.condition),
            str(r.j_star),
            _fmt(r.lam_target),
        ]
        for r in result.records
    ]
    _write_csv(csv_path, header, rows)
    plot_path = out / "sweep_norms.dat"
    _write_plot(
        plot_path,
        "|rho| [1] vs scattered gradient norm [field]",
        [abs(r.rho) for r in result.records],
        [r.grad_volume for r in result.records],
    )
    payload["derived"] = {
        "fits": result.fits,
        "excluded_by_regime": result.excluded,
        "j_star": result.records[0].j_star,
        "lambda_star": result.records[0].lam_target,
        "mode": "control (fixed theta)" if s.get("theta") is not None else "matched resonance",
    }
    payload["diagnostics"] = {
        "sweep_runtime_s": result.runtime,
        "max_condition_estimate": max(r.condition for r in result.records),
    }
    payload["artifacts"] = [csv_path.name, plot_path.name]
    return 0


def _run_validate(rc, out, payload):
    import numpy as np

    from . import diagnostics as dg
    from . import geometry as geo
    from . import layers as ly
    from . import spectral
    from . import transmission as tr

    s = rc.settings
    geom, quad = _build_quadrature(rc)
    kind = s["geometry"]
    s0 = ly.assemble_single_layer(quad, 0.0)
    k0 = ly.assemble_np_adjoint(quad, 0.0)
    stilde = spectral.build_stilde(quad, s0=s0, kstar=k0)
    checks = []

    calderon = spectral.calderon_residual(stilde, k0)
    checks.append(("calderon_identity", float(calderon), 1e-6))

    if kind == "stadium":
        # graded fine panels: offsets of 4e-4 (caps) / 1e-3 (flats) must
        # exceed 3x the local node spacing of the evaluation quadrature
        flat_panels = max(340, int(np.ceil(340.0 * s["L"])))
        cap_panels = max(160, int(np.ceil(160.0 * s["delta"] / 0.05)))
        fine = geo._panel_quadrature(
            geom, [flat_panels, cap_panels, flat_panels, cap_panels], [6, 3, 6, 3], 16
        )
        junctions = np.array(
            [[sx * s["L"] / 2.0, sy * s["delta"]] for sx in (-1, 1) for sy in (-1, 1)]
        )

        def keep(x, radius=0.02):
            dist = np.linalg.norm(x[:, None, :] - junctions[None, :, :], axis=2)
            return dist.min(axis=1) > radius

        idx = np.arange(0, quad.n, 8)
        kept_nodes = quad.nodes[idx][keep(quad.nodes[idx])]
        eps = np.where(np.abs(kept_nodes[:, 0]) > s["L"] / 2.0, 4e-4, 1e-3)
        jump_kwargs = {"eps": eps, "subsample": 8, "keep": keep}
    else:
        builder = geo.build_disk if kind == "disk" else geo.build_ellipse
        args = (s["radius"],) if kind == "disk" else (s["a"], s["b"])
        # offset evaluation at distance eps needs node spacing below eps/3
        perimeter = float(np.sum(quad.weights))
        fine = builder(*args, n=max(int(np.ceil(3200.0 * perimeter)), 20480))[1]
        jump_kwargs = {"eps": 1e-3, "subsample": 8}
    for side in ("exterior", "interior"):
        residual = dg.jump_relation_residual(
            s0, k0, dg.probe_density, fine, side=side, **jump_kwargs
        )
        checks.append((f"jump_relation_{side}", float(residual), 1e-6))

    artifacts = []
    if kind == "disk":
        cfg = tr.ScatterConfig(quad, rc.eps_c, s["omega"], tuple(s["d"]))
        sol = tr.assemble_and_solve(cfg)
        angles, targets = _ring(s["eval_radius"], s["eval_count"])
        u_num = tr.evaluate_fields(sol, targets).u_s
        u_ref = dg.disk_series_scattered(
            rc.eps_c, s["omega"], s["radius"], tuple(s["d"]), targets
        )
        scale = np.max(np.abs(u_ref))
        mismatch = float(np.max(np.abs(u_num - u_ref)) / scale)
        checks.append(("disk_series_mismatch", mismatch, 1e-6))
        plot_path = out / "validate_mismatch.dat"
        _write_plot(
            plot_path,
            "angle [rad] vs |u_numeric - u_series| / max|u_series|",
            angles,
            np.abs(u_num - u_ref) / scale,
        )
        artifacts.append(plot_path.name)

    csv_path = out / "validate.csv"
    header = ["check [name]", "value [1]", "threshold [1]", "status [pass/fail]"]
    rows = [
        [name, _fmt(value), _fmt(threshold), "pass" if value < threshold else "fail"]
        for name, value, threshold in checks
    ]
    _write_csv(csv_path, header, rows)
    artifacts.insert(0, csv_path.name)
    all_pass = all(value < threshold for _, value, threshold in checks)
    payload["derived"] = {"n_nodes": quad.n, "all_checks_pass": all_pass}
    payload["diagnostics"] = {name: value for name, value, _ in checks}
    payload["artifacts"] = artifacts
    return 0 if all_pass else 1


_RUNNERS = {
    "spectrum": _run_spectrum,
    "scatter": _run_scatter,
    "asymptotic": _run_asymptotic,
    "resonance-sweep": _run_sweep,
    "validate": _run_validate,
}


def run(rc: RunConfig) -> int:
    """Execute one subcommand; always leaves a JSON summary in the out dir."""
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    payload = _echo(rc)
    start = time.perf_counter()
    try:
        code = _RUNNERS[rc.subcommand](rc, out, payload)
    except Exception as exc:
        payload["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = 1
        print(f"error: {exc}", file=sys.stderr)
    payload["wall_time_s"] = time.perf_counter() - start
    payload["timestamp_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    _write_json(out / f"{_slug(rc.subcommand)}.json", payload)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nanorod",
        description="Boundary-integral scattering, spectra, and thin-rod "
        "asymptotics for a 2D stadium inclusion.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="path to key=value config file")
    parser.add_argument("--out", default=None, help="output directory (default: config 'out' key or '.')")
    args = parser.parse_args(argv)
    try:
        _apply_thread_override()
        text = Path(args.config).read_text(encoding="utf-8")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config file: {exc}", file=sys.stderr)
        return 2
    try:
        rc = parse_config(text, subcommand=args.subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        rc = rc.with_out_dir(args.out)
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
