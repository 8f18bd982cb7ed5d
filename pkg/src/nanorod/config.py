"""Flat key=value run configuration with typed blocks and line-aware errors.

Parsing is pure text handling (no numerics imports) so the command line
can honor the thread-count environment override before any BLAS-backed
module loads. Every effective setting, given or defaulted, lands in the
RunConfig settings dict that the artifact writers echo into JSON.
"""

from dataclasses import dataclass, replace

SUBCOMMANDS = ("spectrum", "scatter", "asymptotic", "resonance-sweep", "validate")

RHO_SCAN_PRESET = {
    "L": 1.0,
    "delta": 0.05,
    "resolution": 512,
    "omega": 1e-2,
    "d": (1.0, 0.0),
    "rho_abs_min": 1e-3,
    "rho_abs_max": 10.0**-1.5,
    "rho_count": 5,
    # keep the full loss window inside the fit; the smallness guard with
    # the default constant would drop the two lossiest decades' edge
    "c1": 1.0,
    "compute_volume": True,
}


class ConfigError(ValueError):
    """Configuration text rejected; the message carries the offending line."""


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _to_float(raw):
    return float(raw)


def _to_int(raw):
    value = float(raw)
    if value != int(value):
        raise ValueError(raw)
    return int(value)


def _to_bool(raw):
    token = raw.strip().lower()
    if token in _TRUE:
        return True
    if token in _FALSE:
        return False
    raise ValueError(raw)


def _to_pair(raw):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError(raw)
    return (float(parts[0]), float(parts[1]))


def _to_str(raw):
    return raw.strip()


# key -> (converter, human-readable type name)
_SCHEMA = {
    "geometry": (_to_str, "string"),
    "L": (_to_float, "float"),
    "delta": (_to_float, "float"),
    "radius": (_to_float, "float"),
    "a": (_to_float, "float"),
    "b": (_to_float, "float"),
    "resolution": (_to_int, "int"),
    "eps_re": (_to_float, "float"),
    "eps_im": (_to_float, "float"),
    "lambda_target": (_to_float, "float"),
    "rho": (_to_float, "float"),
    "theta": (_to_float, "float"),
    "omega": (_to_float, "float"),
    "d": (_to_pair, "pair of floats"),
    "R": (_to_float, "float"),
    "collar_factor": (_to_float, "float"),
    "grid_1d": (_to_int, "int"),
    "c1": (_to_float, "float"),
    "end_factor": (_to_float, "float"),
    "cap_normalized": (_to_bool, "bool"),
    "n_modes": (_to_int, "int"),
    "eval_radius": (_to_float, "float"),
    "eval_count": (_to_int, "int"),
    "panel_order": (_to_int, "int"),
    "rho_abs_min": (_to_float, "float"),
    "rho_abs_max": (_to_float, "float"),
    "rho_count": (_to_int, "int"),
    "compute_volume": (_to_bool, "bool"),
    "preset": (_to_str, "string"),
    "out": (_to_str, "string"),
}

_GEOMETRY_KEYS = ("geometry", "L", "delta", "radius", "a", "b", "resolution")
_MATERIAL_KEYS = ("eps_re", "eps_im", "lambda_target", "rho")

_ALLOWED = {
    "spectrum": _GEOMETRY_KEYS + ("n_modes", "panel_order", "out"),
    "scatter": _GEOMETRY_KEYS
    + _MATERIAL_KEYS
    + (
        "omega",
        "d",
        "R",
        "collar_factor",
        "compute_volume",
        "eval_radius",
        "eval_count",
        "panel_order",
        "out",
    ),
    "asymptotic": _GEOMETRY_KEYS
    + _MATERIAL_KEYS
    + (
        "omega",
        "d",
        "grid_1d",
        "end_factor",
        "cap_normalized",
        "eval_radius",
        "eval_count",
        "panel_order",
        "out",
    ),
    "resonance-sweep": _GEOMETRY_KEYS
    + (
        "theta",
        "lambda_target",
        "omega",
        "d",
        "rho_abs_min",
        "rho_abs_max",
        "rho_count",
        "c1",
        "n_modes",
        "R",
        "collar_factor",
        "compute_volume",
        "preset",
        "panel_order",
        "out",
    ),
    "validate": _GEOMETRY_KEYS
    + ("eps_re", "eps_im", "omega", "d", "eval_radius", "eval_count", "panel_order", "out"),
}

# effective values used when a key is absent (per subcommand where noted)
_DEFAULTS = {
    "resolution": 512,
    "eps_im": 0.0,
    "d": (1.0, 0.0),
    "R": 10.0,
    "collar_factor": 5.0,
    "grid_1d": 0,
    "c1": 0.1,
    "end_factor": 2.0,
    "cap_normalized": True,
    "n_modes": 40,
    "eval_radius": 2.0,
    "eval_count": 64,
    "panel_order": 8,
    "rho_abs_min": 1e-3,
    "rho_abs_max": 10.0**-1.5,
    "rho_count": 5,
    "compute_volume": True,
    "out": ".",
    "csv_significant_digits": 17,
}

_VALIDATE_DEFAULTS = {"radius": 1.0, "eps_re": 4.0, "omega": 0.3}
_SWEEP_DEFAULTS = {"L": 1.0, "delta": 0.05, "omega": 1e-2}


@dataclass(frozen=True)
class RunConfig:
    """Typed, validated settings for one subcommand invocation."""

    subcommand: str
    settings: dict
    given: tuple
    lines: dict
    out_dir: str

    @property
    def geometry_kind(self):
        return self.settings.get("geometry")

    @property
    def eps_c(self):
        """Material permittivity, direct or synthesized from loss coordinates."""
        s = self.settings
        if s.get("eps_re") is not None:
            return complex(s["eps_re"], s.get("eps_im", 0.0))
        if s.get("lambda_target") is not None:
            lam, rho = s["lambda_target"], s["rho"]
            theta = (lam + 0.5 - rho) / (lam - 0.5)
            return 1.0 / complex(theta, rho)
        return None

    def with_out_dir(self, out_dir):
        return replace(self, out_dir=str(out_dir))


def _fail(lines, key, message):
    line = lines.get(key)
    prefix = f"line {line}: " if line is not None else ""
    raise ConfigError(prefix + message)


def _scan(text):
    """key -> value dict plus key -> line map, with duplicate rejection."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first on line {lines[key]})"
            )
        converter, type_name = _SCHEMA[key]
        try:
            values[key] = converter(value)
        except (TypeError, ValueError):
            raise ConfigError(
                f"line {lineno}: expected {type_name} for {key!r}, got {value!r}"
            ) from None
        lines[key] = lineno
    return values, lines


def _validate_present(values, lines):
    """Semantic checks on keys that were given, before completeness checks.

    Runs first so a bad value (an excluded target, a degenerate stadium)
    is reported even when other blocks are still missing.
    """
    if "L" in values and "delta" in values and values["L"] > 0:
        if values["delta"] >= values["L"] / 2.0:
            _fail(
                lines,
                "delta",
                f"delta = {values['delta']} must be smaller than L/2 = "
                f"{values['L'] / 2.0} (the flat faces vanish otherwise)",
            )
    if "lambda_target" in values:
        _check_lambda_target(values, lines, require_rho=False)
    elif "rho" in values and values["rho"] > 0:
        _fail(lines, "rho", "rho must be <= 0 (lossy convention)")


def _resolve_geometry(values, lines, subcommand):
    """Pick exactly one geometry family and validate its parameters."""
    families = {
        "stadium": ("L", "delta"),
        "disk": ("radius",),
        "ellipse": ("a", "b"),
    }
    present = [kind for kind, keys in families.items() if any(k in values for k in keys)]
    declared = values.get("geometry")
    if declared is not None:
        if declared not in families:
            _fail(lines, "geometry", f"geometry must be one of {sorted(families)}")
        if present and present != [declared]:
            _fail(
                lines,
                "geometry",
                f"geometry={declared} conflicts with {present[0]} parameters",
            )
        present = [declared]
    if len(present) > 1:
        offending = max(
            (k for kind in present for k in families[kind] if k in values),
            key=lambda k: lines.get(k, 0),
        )
        _fail(
            lines,
            offending,
            "exactly one geometry block: stadium (L, delta), disk (radius), "
            "or ellipse (a, b)",
        )
    if not present:
        if subcommand == "validate":
            values.setdefault("radius", _VALIDATE_DEFAULTS["radius"])
            present = ["disk"]
        elif subcommand == "resonance-sweep":
            values.setdefault("L", _SWEEP_DEFAULTS["L"])
            values.setdefault("delta", _SWEEP_DEFAULTS["delta"])
            present = ["stadium"]
        else:
            raise ConfigError(
                "missing geometry block: stadium (L, delta), disk (radius), "
                "or ellipse (a, b)"
            )
    kind = present[0]
    values["geometry"] = kind
    for key in families[kind]:
        if key not in values:
            _fail(lines, "geometry", f"{kind} geometry requires {key!r}")
        if values[key] <= 0:
            _fail(lines, key, f"{key} must be positive")
    if kind == "stadium" and values["delta"] >= values["L"] / 2.0:
        _fail(
            lines,
            "delta",
            f"delta = {values['delta']} must be smaller than L/2 = "
            f"{values['L'] / 2.0} (the flat faces vanish otherwise)",
        )
    if subcommand in ("asymptotic", "resonance-sweep") and kind != "stadium":
        raise ConfigError(f"{subcommand} requires the stadium geometry (L, delta)")


def _resolve_material(values, lines, subcommand):
    direct = "eps_re" in values or "eps_im" in values
    resonant = "lambda_target" in values or "rho" in values
    if subcommand == "resonance-sweep":
        if "theta" in values and "lambda_target" in values:
            _fail(lines, "theta", "fix either theta (control) or lambda_target (matched)")
        if "lambda_target" in values:
            _check_lambda_target(values, lines, require_rho=False)
        return
    if direct and resonant:
        _fail(
            lines,
            "lambda_target" if "lambda_target" in values else "rho",
            "exactly one material block: eps_re/eps_im or lambda_target+rho",
        )
    if resonant:
        if "lambda_target" not in values:
            _fail(lines, "rho", "rho requires lambda_target")
        _check_lambda_target(values, lines, require_rho=False)
        if "rho" not in values:
            _fail(lines, "lambda_target", "lambda_target requires rho (material loss)")
        return
    if direct:
        if "eps_re" not in values:
            _fail(lines, "eps_im", "eps_im requires eps_re")
        if complex(values["eps_re"], values.get("eps_im", 0.0)) in (0, 1):
            _fail(lines, "eps_re", "eps_c must differ from 0 and 1")
        return
    if subcommand in ("scatter", "asymptotic"):
        raise ConfigError(
            "missing material block: eps_re/eps_im or lambda_target+rho"
        )
    if subcommand == "validate":
        values.setdefault("eps_re", _VALIDATE_DEFAULTS["eps_re"])


def _check_lambda_target(values, lines, require_rho):
    lam = values["lambda_target"]
    if lam == 0.5:
        _fail(
            lines,
            "lambda_target",
            "lambda_target = 1/2 is the epsilon-near-zero limit and is excluded",
        )
    if not -0.5 < lam < 0.5:
        _fail(lines, "lambda_target", "lambda_target must lie in (-1/2, 1/2)")
    if require_rho or "rho" in values:
        rho = values.get("rho", 0.0)
        if rho > 0:
            _fail(lines, "rho", "rho must be <= 0 (lossy convention)")


def _resolve_wave(values, lines, subcommand):
    needs_wave = subcommand in ("scatter", "asymptotic")
    if needs_wave and "omega" not in values:
        raise ConfigError("missing wave block: omega (and optionally d)")
    if subcommand == "validate":
        values.setdefault("omega", _VALIDATE_DEFAULTS["omega"])
    if subcommand == "resonance-sweep":
        values.setdefault("omega", _SWEEP_DEFAULTS["omega"])
    if "omega" in values and values["omega"] <= 0:
        _fail(lines, "omega", "omega must be positive")
    if subcommand != "spectrum":
        d = values.get("d", _DEFAULTS["d"])
        norm = (d[0] ** 2 + d[1] ** 2) ** 0.5
        if norm == 0:
            _fail(lines, "d", "d must be a nonzero direction")
        values["d"] = (d[0] / norm, d[1] / norm)


def _resolve_numerics(values, lines):
    positive = ("R", "collar_factor", "c1", "end_factor", "eval_radius")
    for key in positive:
        if key in values and values[key] <= 0:
            _fail(lines, key, f"{key} must be positive")
    counts = ("resolution", "n_modes", "eval_count", "rho_count", "panel_order")
    for key in counts:
        if key in values and values[key] < 1:
            _fail(lines, key, f"{key} must be at least 1")
    if "grid_1d" in values and values["grid_1d"] < 0:
        _fail(lines, "grid_1d", "grid_1d must be 0 (automatic) or positive")
    if "rho_abs_min" in values or "rho_abs_max" in values:
        lo = values.get("rho_abs_min", _DEFAULTS["rho_abs_min"])
        hi = values.get("rho_abs_max", _DEFAULTS["rho_abs_max"])
        if lo <= 0 or hi <= 0 or lo > hi:
            _fail(
                lines,
                "rho_abs_min" if "rho_abs_min" in values else "rho_abs_max",
                "loss grid needs 0 < rho_abs_min <= rho_abs_max",
            )


def parse_config(text, subcommand="scatter") -> RunConfig:
    """Parse flat key=value text into a validated RunConfig.

    Unknown keys, duplicates, type mismatches, and block violations raise
    ConfigError with the offending line number where one exists.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {SUBCOMMANDS}")
    values, lines = _scan(text)
    allowed = set(_ALLOWED[subcommand])
    for key in values:
        if key not in allowed:
            _fail(lines, key, f"key {key!r} does not apply to {subcommand!r}")
    given = tuple(sorted(values))
    if subcommand == "resonance-sweep":
        preset = values.get("preset")
        if preset is not None and preset != "rho-scan":
            _fail(lines, "preset", "the only sweep preset is 'rho-scan'")
        if preset == "rho-scan":
            for key, preset_value in RHO_SCAN_PRESET.items():
                values.setdefault(key, preset_value)
    _validate_present(values, lines)
    _resolve_geometry(values, lines, subcommand)
    _resolve_material(values, lines, subcommand)
    _resolve_wave(values, lines, subcommand)
    _resolve_numerics(values, lines)

    settings = {
        key: value
        for key, value in _DEFAULTS.items()
        if key in allowed or key == "csv_significant_digits"
    }
    settings.update(values)
    out_dir = settings.get("out", ".")
    return RunConfig(
        subcommand=subcommand,
        settings=settings,
        given=given,
        lines=dict(lines),
        out_dir=out_dir,
    )
