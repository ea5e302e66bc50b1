"""Command-line front end: reproducible spectra, maps, IV sweeps and fits.

Every command takes its parameters from flags, optionally merged over a
YAML config file (flag values win; unknown config keys are rejected).
Outputs are delimited tables or key-value reports with the seed and
calibration profile recorded in the header, byte-identical across reruns
of the same (config, seed).

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np
import yaml

from . import __version__
from .calibration import (GAP_PRESETS, CalibrationProfile, ProfileError,
                          default_profile, load_profile, profile_items)
from .geometry import GeometryError, MagneticField, UnitVector, direction_from_miller
from .inversion import (DipEstimate, InversionError, fit_lorentzians,
                        fit_power_curve, invert_field)
from .photodynamics import (MWDrive, PhotodynamicsError, SteadyStateError,
                            background_current, nv_current, photocurrent_model,
                            solve_cw)
from .spectra import (MagnetModel, SpectraError, Spectrum, SpectrumConfig,
                      field_map, synth_spectrum)
from .tables import DataTable, TableError, format_number, parse_table
from .transport import TransportError, iv_curve


class UsageError(ValueError):
    """Config/flag problems: exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_direction(text: str) -> UnitVector:
    """Accept '1,0,0' style 3-vectors or Miller strings like '111'/'1-10'."""
    text = text.strip()
    if "," in text:
        parts = [float(tok) for tok in text.split(",")]
        if len(parts) != 3:
            raise UsageError(f"direction needs three components, got {text!r}")
        return UnitVector.from_array(parts)
    tokens = []
    i = 0
    while i < len(text):
        sign = 1
        if text[i] in "+-":
            sign = -1 if text[i] == "-" else 1
            i += 1
        if i >= len(text) or not text[i].isdigit():
            raise UsageError(f"cannot parse direction {text!r}")
        tokens.append(sign * int(text[i]))
        i += 1
    if len(tokens) != 3:
        raise UsageError(f"Miller direction needs three indices, got {text!r}")
    try:
        return direction_from_miller(*tokens)
    except GeometryError as exc:
        raise UsageError(str(exc)) from exc


def _merge_config(args, parser_defaults, config_path):
    """Overlay YAML config under explicit flags; reject unknown keys."""
    if not config_path:
        return args
    try:
        with open(config_path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {config_path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise UsageError(f"malformed config {config_path}{where}: {exc}") from exc
    if data is None:
        return args
    if not isinstance(data, dict):
        raise UsageError(f"config {config_path} must be a mapping")
    known = set(parser_defaults)
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown config key {key!r} in {config_path}")
        if getattr(args, dest) == parser_defaults[dest]:  # flags win
            setattr(args, dest, value)
    return args


def _load_profile_arg(args) -> CalibrationProfile:
    name = getattr(args, "profile", None)
    if not name:
        return default_profile()
    return load_profile(name)


def _write_output(text: str, path):
    if path and path != "-":
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _freq_grid(args) -> np.ndarray:
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    if args.fmax <= args.fmin:
        raise UsageError("--fmax must exceed --fmin")
    return np.linspace(args.fmin, args.fmax, args.points)


def _spectrum_table(spec: Spectrum, command: str) -> DataTable:
    meta = {
        "tool": f"pdmrsim {__version__}",
        "command": command,
        "profile": spec.metadata["profile"],
        "seed": spec.metadata["seed"],
        "field_tesla": format_number(spec.metadata["field_tesla"]),
        "field_direction": ",".join(format_number(v)
                                    for v in spec.metadata["field_direction"]),
        "optical_power_w": format_number(spec.metadata["optical_power_w"]),
        "method": spec.metadata["method"],
        "include_excited": spec.metadata["include_excited"],
        "baseline_a": format_number(spec.baseline),
        "noise_rms_a": format_number(spec.noise_rms),
    }
    rows = np.column_stack([spec.freqs, spec.current, spec.contrast_trace])
    return DataTable(columns=["freq_hz", "current_a", "contrast"],
                     units=["Hz", "A", "dimensionless"],
                     rows=rows, metadata=meta)


def _spectrum_from_table(table: DataTable) -> Spectrum:
    freqs = table.column("freq_hz")
    current = table.column("current_a")
    baseline = float(table.metadata.get("baseline_a", np.median(current)))
    noise = float(table.metadata.get("noise_rms_a", 0.0))
    contrast = np.zeros_like(current) if baseline == 0 \
        else (baseline - current) / baseline
    return Spectrum(freqs=freqs, current=current, contrast_trace=contrast,
                    baseline=baseline, noise_rms=noise, metadata=dict(table.metadata))


def _report(pairs) -> str:
    return "".join(f"{key} = {value}\n" for key, value in pairs)


# ---------------------------------------------------------------- commands


def _cmd_spectrum(args):
    profile = _load_profile_arg(args)
    config = SpectrumConfig(
        freq_grid=_freq_grid(args),
        field=MagneticField(args.b_mag, parse_direction(args.b_dir)),
        optical_power=args.power,
        mw_rabi=args.rabi,
        mw_dephasing=args.dephasing,
        include_excited=args.include_excited,
        noise_rms=args.noise_rms,
        seed=args.seed,
        method=args.method,
    )
    spec = synth_spectrum(config, profile)
    _write_output(_spectrum_table(spec, "spectrum").emit(), args.output)
    return 0


def _cmd_fieldmap(args):
    profile = _load_profile_arg(args)
    direction = parse_direction(args.b_dir)
    config = SpectrumConfig(
        freq_grid=_freq_grid(args),
        field=MagneticField(0.0, direction),
        optical_power=args.power,
        mw_rabi=args.rabi,
        mw_dephasing=args.dephasing,
        include_excited=args.include_excited,
        noise_rms=args.noise_rms,
        seed=args.seed,
        method=args.method,
    )
    magnet = None
    if args.magnet_surface_field is not None:
        if args.magnet_reference_distance is None:
            raise UsageError("--magnet-reference-distance required with a magnet model")
        magnet = MagnetModel(args.magnet_surface_field, args.magnet_reference_distance)
    if args.rows < 1:
        raise UsageError("--rows must be >= 1")
    sweep = np.linspace(args.sweep_start, args.sweep_stop, args.rows)
    pdmr_map = field_map(sweep, config, profile, magnet=magnet)

    n_rows, n_freqs = pdmr_map.matrix.shape
    out = np.empty((n_rows * n_freqs, 3))
    out[:, 0] = np.repeat(pdmr_map.sweep_values, n_freqs)
    out[:, 1] = np.tile(pdmr_map.freqs, n_rows)
    out[:, 2] = pdmr_map.matrix.reshape(-1)
    meta = {
        "tool": f"pdmrsim {__version__}",
        "command": "fieldmap",
        "profile": pdmr_map.metadata["profile"],
        "seed": pdmr_map.metadata["seed"],
        "field_direction": ",".join(format_number(v)
                                    for v in pdmr_map.metadata["field_direction"]),
        "optical_power_w": format_number(pdmr_map.metadata["optical_power_w"]),
        "method": pdmr_map.metadata["method"],
        "include_excited": pdmr_map.metadata["include_excited"],
        "sweep_kind": pdmr_map.metadata["sweep_kind"],
        "rows": n_rows,
    }
    table = DataTable(columns=["b_tesla", "freq_hz", "current_a"],
                      units=["T", "Hz", "A"], rows=out, metadata=meta)
    _write_output(table.emit(), args.output)
    return 0


def _cmd_iv(args):
    profile = _load_profile_arg(args)
    transport = profile.transport
    if args.gap_preset:
        if args.gap_preset not in GAP_PRESETS:
            raise UsageError(
                f"unknown gap preset {args.gap_preset!r}; choose from "
                f"{sorted(GAP_PRESETS)}"
            )
        transport = replace(transport, gap=GAP_PRESETS[args.gap_preset])
    elif args.gap is not None:
        if args.gap <= 0:
            raise UsageError("--gap must be > 0")
        transport = replace(transport, gap=args.gap)

    if args.generation is not None:
        generation = (args.generation, args.generation)
    else:
        result = solve_cw(profile.photophysics, args.power, MWDrive(on=False))
        generation = (result.gamma_e, result.gamma_h)

    if args.points < 2:
        raise UsageError("--points must be >= 2")
    voltages = np.linspace(0.0, args.vmax, args.points)
    points = iv_curve(voltages, generation, transport)
    rows = np.array([[p.voltage, p.field, p.current,
                      1.0 if p.regime == "ohmic" else 0.0] for p in points])
    meta = {
        "tool": f"pdmrsim {__version__}",
        "command": "iv",
        "profile": profile.name,
        "seed": args.seed,
        "gap_m": format_number(transport.gap),
        "optical_power_w": format_number(args.power),
        "gamma_e_per_m3_s": format_number(generation[0]),
        "gamma_h_per_m3_s": format_number(generation[1]),
    }
    table = DataTable(columns=["voltage_v", "field_v_per_m", "current_a", "ohmic"],
                      units=["V", "V/m", "A", "bool"], rows=rows, metadata=meta)
    _write_output(table.emit(), args.output)
    return 0


def _cmd_power_sweep(args):
    profile = _load_profile_arg(args)
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    if args.pmin <= 0 or args.pmax <= args.pmin:
        raise UsageError("need 0 < --pmin < --pmax")
    powers = np.geomspace(args.pmin, args.pmax, args.points)

    if args.source == "eq3":
        currents = np.array([photocurrent_model(p, profile.power_curve)
                             for p in powers])
        totals = currents
    else:
        currents, totals = [], []
        for p in powers:
            res = solve_cw(profile.photophysics, float(p), MWDrive(on=False))
            i_nv = nv_current(res)
            currents.append(i_nv)
            totals.append(i_nv + background_current(profile.photophysics, float(p)))
        currents = np.array(currents)
        totals = np.array(totals)

    rows = np.column_stack([powers, currents, totals])
    meta = {
        "tool": f"pdmrsim {__version__}",
        "command": "power-sweep",
        "profile": profile.name,
        "seed": args.seed,
        "source": args.source,
    }
    table = DataTable(columns=["power_w", "current_a", "current_total_a"],
                      units=["W", "A", "A"], rows=rows, metadata=meta)
    _write_output(table.emit(), args.output)
    return 0


def _cmd_fit_spectrum(args):
    with open(args.input) as fh:
        table = parse_table(fh.read())
    spec = _spectrum_from_table(table)
    dips, fit = fit_lorentzians(spec, n_dips=args.n_dips)
    pairs = [
        ("tool", f"pdmrsim {__version__}"),
        ("command", "fit-spectrum"),
        ("input", args.input),
        ("n_dips", len(dips)),
        ("converged", fit.converged),
        ("residual_norm_a", format_number(fit.residual_norm)),
        ("baseline_a", format_number(fit.params[0] if fit.params.size else 0.0)),
    ]
    for i, dip in enumerate(dips):
        pairs += [
            (f"dip{i}.center_hz", format_number(dip.center)),
            (f"dip{i}.center_ci95_hz", format_number(dip.center_ci95)),
            (f"dip{i}.fwhm_hz", format_number(dip.fwhm)),
            (f"dip{i}.fwhm_ci95_hz", format_number(dip.fwhm_ci95)),
            (f"dip{i}.depth_a", format_number(dip.depth)),
            (f"dip{i}.depth_ci95_a", format_number(dip.depth_ci95)),
        ]
    _write_output(_report(pairs), args.output)
    return 0


def _cmd_fit_power(args):
    with open(args.input) as fh:
        table = parse_table(fh.read())
    data = (table.column("power_w"), table.column(args.current_column))
    params, fit = fit_power_curve(data)
    ci = 1.96 * np.sqrt(np.clip(np.diag(fit.covariance), 0.0, None))
    pairs = [
        ("tool", f"pdmrsim {__version__}"),
        ("command", "fit-power"),
        ("input", args.input),
        ("converged", fit.converged),
        ("alpha_w", format_number(params.alpha)),
        ("alpha_ci95_w", format_number(ci[0])),
        ("beta_w_per_a", format_number(params.beta)),
        ("beta_ci95_w_per_a", format_number(ci[1])),
        ("residual_norm", format_number(fit.residual_norm)),
        ("wide_intervals", fit.wide_intervals),
    ]
    _write_output(_report(pairs), args.output)
    return 0


_CLASS_ALIASES = {"100": "axis_100", "111": "axis_111", "free": "free",
                  "axis_100": "axis_100", "axis_111": "axis_111"}


def _cmd_invert_field(args):
    profile = _load_profile_arg(args)
    direction_class = _CLASS_ALIASES.get(args.direction_class)
    if direction_class is None:
        raise UsageError(f"unknown direction class {args.direction_class!r}")

    if args.dips:
        centers = [float(tok) for tok in args.dips.split(",")]
        dips = [DipEstimate(center=c, fwhm=1.0, depth=1.0) for c in centers]
    else:
        if not args.input:
            raise UsageError("invert-field needs an input spectrum or --dips")
        with open(args.input) as fh:
            table = parse_table(fh.read())
        spec = _spectrum_from_table(table)
        dips, _ = fit_lorentzians(spec, n_dips=args.n_dips)

    field, fit = invert_field(dips, direction_class, profile)
    ci = fit.ci95()
    pairs = [
        ("tool", f"pdmrsim {__version__}"),
        ("command", "invert-field"),
        ("direction_class", direction_class),
        ("n_dips", len(dips)),
        ("converged", fit.converged),
        ("b_tesla", format_number(field.magnitude)),
        ("b_ci95_tesla", format_number(ci[0])),
        ("direction", ",".join(format_number(v) for v in field.direction.array)),
        ("residual_norm_hz", format_number(fit.residual_norm)),
    ]
    _write_output(_report(pairs), args.output)
    return 0


def _cmd_calibration(args):
    if args.action != "show":
        raise UsageError(f"unknown calibration action {args.action!r}")
    profile = _load_profile_arg(args)
    pairs = [("profile", profile.name)]
    for key, value, provenance in profile_items(profile):
        if isinstance(value, tuple):
            rendered = ",".join(format_number(v) for v in value)
        elif isinstance(value, (int, float)):
            rendered = format_number(value)
        else:
            rendered = str(value)
        pairs.append((key, f"{rendered}  [{provenance}]"))
    _write_output(_report(pairs), args.output)
    return 0


# ------------------------------------------------------------------ parser


def _add_common(sub):
    sub.add_argument("--profile", default=None,
                     help="calibration profile name or path")
    sub.add_argument("--config", default=None, help="YAML config file")
    sub.add_argument("--seed", type=int, default=0, help="RNG seed (recorded)")
    sub.add_argument("-o", "--output", default="-", help="output path or '-'")


def build_parser() -> _Parser:
    parser = _Parser(prog="pdmrsim", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"pdmrsim {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("spectrum", help="synthesize a CW-PDMR spectrum")
    sp.add_argument("--b-mag", type=float, default=0.0, help="field magnitude, T")
    sp.add_argument("--b-dir", default="1,0,0", help="field direction")
    sp.add_argument("--power", type=float, default=0.1, help="optical power, W")
    sp.add_argument("--fmin", type=float, default=2.77e9)
    sp.add_argument("--fmax", type=float, default=2.97e9)
    sp.add_argument("--points", type=int, default=2001)
    sp.add_argument("--rabi", type=float, default=None)
    sp.add_argument("--dephasing", type=float, default=None)
    sp.add_argument("--include-excited", action="store_true")
    sp.add_argument("--noise-rms", type=float, default=None)
    sp.add_argument("--method", choices=["fast", "full"], default="fast")
    _add_common(sp)
    sp.set_defaults(func=_cmd_spectrum, _subparser=sp)

    fm = subs.add_parser("fieldmap", help="magnet-sweep PDMR map")
    fm.add_argument("--b-dir", default="1,1,1")
    fm.add_argument("--sweep-start", type=float, default=0.0,
                    help="first field (T) or distance (m)")
    fm.add_argument("--sweep-stop", type=float, default=135e-3)
    fm.add_argument("--rows", type=int, default=200)
    fm.add_argument("--power", type=float, default=0.1)
    fm.add_argument("--fmin", type=float, default=0.05e9)
    fm.add_argument("--fmax", type=float, default=3.2e9)
    fm.add_argument("--points", type=int, default=2000)
    fm.add_argument("--rabi", type=float, default=None)
    fm.add_argument("--dephasing", type=float, default=None)
    fm.add_argument("--include-excited", action="store_true")
    fm.add_argument("--noise-rms", type=float, default=None)
    fm.add_argument("--method", choices=["fast", "full"], default="fast")
    fm.add_argument("--magnet-surface-field", type=float, default=None)
    fm.add_argument("--magnet-reference-distance", type=float, default=None)
    _add_common(fm)
    fm.set_defaults(func=_cmd_fieldmap, _subparser=fm)

    iv = subs.add_parser("iv", help="current-voltage sweep")
    iv.add_argument("--gap", type=float, default=None, help="electrode gap, m")
    iv.add_argument("--gap-preset", default=None,
                    help=f"named gap: {', '.join(sorted(GAP_PRESETS))}")
    iv.add_argument("--vmax", type=float, default=60.0)
    iv.add_argument("--points", type=int, default=121)
    iv.add_argument("--power", type=float, default=0.1,
                    help="optical power for the generation rates, W")
    iv.add_argument("--generation", type=float, default=None,
                    help="override carrier generation, s^-1 m^-3")
    _add_common(iv)
    iv.set_defaults(func=_cmd_iv, _subparser=iv)

    ps = subs.add_parser("power-sweep", help="photocurrent vs optical power")
    ps.add_argument("--pmin", type=float, default=7.55e-3)
    ps.add_argument("--pmax", type=float, default=0.755)
    ps.add_argument("--points", type=int, default=41)
    ps.add_argument("--source", choices=["rate", "eq3"], default="rate",
                    help="rate model or the closed-form power law")
    _add_common(ps)
    ps.set_defaults(func=_cmd_power_sweep, _subparser=ps)

    fs = subs.add_parser("fit-spectrum", help="detect and fit Lorentzian dips")
    fs.add_argument("input", help="spectrum table file")
    fs.add_argument("--n-dips", type=int, default=None)
    _add_common(fs)
    fs.set_defaults(func=_cmd_fit_spectrum, _subparser=fs)

    fp = subs.add_parser("fit-power", help="fit the power-curve parameters")
    fp.add_argument("input", help="power-sweep table file")
    fp.add_argument("--current-column", default="current_a")
    _add_common(fp)
    fp.set_defaults(func=_cmd_fit_power, _subparser=fp)

    inv = subs.add_parser("invert-field", help="field magnitude from dips")
    inv.add_argument("input", nargs="?", default=None, help="spectrum table file")
    inv.add_argument("--dips", default=None, help="comma-separated centers, Hz")
    inv.add_argument("--direction-class", default="100",
                     help="100, 111 or free")
    inv.add_argument("--n-dips", type=int, default=None)
    _add_common(inv)
    inv.set_defaults(func=_cmd_invert_field, _subparser=inv)

    cal = subs.add_parser("calibration", help="inspect calibration profiles")
    cal.add_argument("action", choices=["show"])
    _add_common(cal)
    cal.set_defaults(func=_cmd_calibration, _subparser=cal)

    return parser


def run(argv) -> int:
    """Entry point returning the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            sub = args._subparser
            defaults = {a.dest: sub.get_default(a.dest)
                        for a in sub._actions
                        if a.dest not in ("help", "func", "_subparser")}
            args = _merge_config(args, defaults, args.config)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProfileError, TableError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SteadyStateError, TransportError, InversionError,
            PhotodynamicsError, SpectraError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
