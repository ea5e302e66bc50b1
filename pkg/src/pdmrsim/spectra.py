"""Forward synthesis of CW-PDMR spectra and magnet-sweep maps.

Two synthesis paths share one physics core:

* ``full``  — solves the nine-level rate model at every frequency point of
  every family (ground truth, linear cost in grid size);
* ``fast``  — per family, one MW-off solve for the baseline plus one
  resonant contrast solve per line group, then Lorentzian dips with the
  closed-form width from :func:`linewidth_model`. Lines of one family closer
  than ``merge_fraction`` x FWHM share a single group (the resonant solve
  drives both, so degenerate lines are not double counted); dips from
  different families simply add through their baseline currents.

Resonance positions come from exact diagonalization per family, with the
configured residual transverse field folded in quadrature into every
projection. The excited-state branch is a synthesis overlay at the
excited-manifold frequencies with a configurable depth fraction (the
underlying measurement only shows it is faint); it rides on the same
quench physics because the ground-line contrast already carries the
mixing-matrix collapse at the anticrossings.
"""

from dataclasses import dataclass, replace

import numpy as np

from .calibration import CalibrationProfile, default_profile
from .geometry import FieldProjection, MagneticField, nv_families, project_field
from .photodynamics import (MWDrive, background_current, nv_current,
                            pdmr_contrast, solve_cw)
from .spin_model import SpinSystem, mixing_matrix, transition_frequencies


class SpectraError(ValueError):
    """Raised for invalid synthesis configuration."""


@dataclass(frozen=True)
class SpectrumConfig:
    """One spectrum acquisition: grid, field, power, MW and noise settings."""

    freq_grid: np.ndarray
    field: MagneticField
    optical_power: float          # W
    mw_rabi: float = None         # Hz, None -> profile default
    mw_dephasing: float = None    # Hz, None -> profile default
    include_excited: bool = False
    noise_rms: float = None       # A, optional seeded white noise
    seed: int = 0
    method: str = "fast"          # "fast" or "full"

    def __post_init__(self):
        grid = np.asarray(self.freq_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise SpectraError("freq_grid must be a 1-D array of >= 2 points")
        if np.any(np.diff(grid) <= 0):
            raise SpectraError("freq_grid must be sorted strictly ascending")
        object.__setattr__(self, "freq_grid", grid)
        if self.optical_power < 0:
            raise SpectraError("optical_power must be >= 0")
        if self.method not in ("fast", "full"):
            raise SpectraError(f"unknown synthesis method {self.method!r}")


@dataclass(frozen=True)
class Spectrum:
    """Synthesized photocurrent versus MW frequency."""

    freqs: np.ndarray
    current: np.ndarray          # A
    contrast_trace: np.ndarray   # (baseline - I) / baseline
    baseline: float              # A, MW-off total current
    noise_rms: float             # A (0 when noise is off)
    metadata: dict


@dataclass(frozen=True)
class PDMRMap:
    """Stack of spectra over a field (or magnet-distance) sweep."""

    sweep_values: np.ndarray     # T
    freqs: np.ndarray            # Hz
    matrix: np.ndarray           # (len(sweep), len(freqs)) currents, A
    metadata: dict


@dataclass(frozen=True)
class MagnetModel:
    """On-axis dipole law for a permanent magnet on a translation stage."""

    surface_field: float       # T at the reference distance
    reference_distance: float  # m

    def __post_init__(self):
        if self.surface_field <= 0 or self.reference_distance <= 0:
            raise SpectraError("magnet model parameters must be positive")


def magnet_field(model: MagnetModel, distance: float) -> float:
    """Cube-law field magnitude at the given magnet-to-sample distance."""
    if distance <= 0:
        raise SpectraError(f"distance must be > 0, got {distance}")
    return model.surface_field * (model.reference_distance / distance) ** 3


def linewidth_model(rabi: float, dephasing: float, pump_rate: float,
                    pump_linewidth_coeff: float = 0.2244,
                    repolarization_coeff: float = 0.1164) -> float:
    """Closed-form FWHM (Hz) of the CW dip.

    The optical cycle both broadens the line (dephasing grows with the pump
    rate) and fights the MW drive (repolarization sets the saturation
    parameter), so FWHM = 2*G2eff*sqrt(1 + W0/(repol)) with
    G2eff = dephasing + c_b*pump_rate and W0 = rabi^2/(2*G2eff). Reduces to
    2*dephasing at zero power and zero Rabi. Coefficients default to the
    shipped calibration.
    """
    if rabi < 0 or dephasing <= 0 or pump_rate < 0:
        raise SpectraError("linewidth_model requires rabi, pump_rate >= 0 and dephasing > 0")
    g2 = dephasing + pump_linewidth_coeff * pump_rate
    w0 = rabi ** 2 / (2.0 * g2)
    if w0 == 0.0:
        return 2.0 * g2
    if pump_rate == 0.0:
        return float("inf")
    repol = repolarization_coeff * pump_rate
    return 2.0 * g2 * np.sqrt(1.0 + w0 / repol)


def effective_projection(field: MagneticField, family,
                         residual_transverse: float) -> FieldProjection:
    """Geometric projection with the residual transverse field in quadrature."""
    proj = project_field(field, family)
    if residual_transverse == 0.0:
        return proj
    b_perp = float(np.hypot(proj.b_perp, residual_transverse))
    tilt = float(np.arctan2(b_perp, proj.b_par))
    return FieldProjection(b_par=proj.b_par, b_perp=b_perp, tilt=tilt)


@dataclass(frozen=True)
class FamilyContext:
    """Per-family spin context reused across the synthesis paths."""

    index: int
    projection: FieldProjection
    transitions: object
    mixing_gs: object
    transitions_es: object
    mixing_es: object
    params: object   # photophysics with the family's density share


def family_contexts(field: MagneticField, profile: CalibrationProfile):
    spin = profile.spin
    synth = profile.synthesis
    out = []
    for fam in nv_families():
        weight = profile.synthesis.family_weights[fam.index]
        proj = effective_projection(field, fam, synth.residual_transverse)
        gs = SpinSystem(d_split=spin.d_gs, gamma=spin.gamma_e, projection=proj)
        es = SpinSystem(d_split=spin.d_es, gamma=spin.gamma_e, projection=proj)
        params = profile.photophysics.with_updates(
            nv_density=profile.photophysics.nv_density * weight
        )
        out.append(FamilyContext(
            index=fam.index,
            projection=proj,
            transitions=transition_frequencies(gs),
            mixing_gs=mixing_matrix(gs),
            transitions_es=transition_frequencies(es, manifold="excited"),
            mixing_es=mixing_matrix(es),
            params=params,
        ))
    return out


def _lorentzian(freqs, center, fwhm):
    return 1.0 / (1.0 + (2.0 * (freqs - center) / fwhm) ** 2)


def _mw_for(config: SpectrumConfig, profile: CalibrationProfile, **kw) -> MWDrive:
    rabi = config.mw_rabi if config.mw_rabi is not None else profile.mw.rabi
    deph = config.mw_dephasing if config.mw_dephasing is not None else profile.mw.dephasing
    return MWDrive(rabi=rabi, dephasing=deph, **kw)


def _line_groups(tr, merge_window: float):
    """Ground-manifold line frequencies grouped within the merge window."""
    f_lo, f_hi = sorted((tr.f_minus, tr.f_plus))
    if f_hi - f_lo < merge_window:
        return [0.5 * (f_lo + f_hi)]
    return [f_lo, f_hi]


def _family_dips(ctx: FamilyContext, config: SpectrumConfig,
                 profile: CalibrationProfile, fwhm: float):
    """Ground and excited (center, relative depth, fwhm) dips for one family.

    Ground depths come from resonant rate-model solves; excited dips are the
    configured fraction of the corresponding ground depth.
    """
    merge_window = profile.synthesis.merge_fraction * fwhm
    gs_dips = []
    for center in _line_groups(ctx.transitions, merge_window):
        mw = _mw_for(config, profile, frequency=center, on=True)
        depth = pdmr_contrast(ctx.params, config.optical_power, mw,
                              ctx.transitions, ctx.mixing_gs, ctx.mixing_es,
                              include_background=False)
        gs_dips.append((center, depth, fwhm))
    es_dips = []
    if config.include_excited:
        scale = profile.synthesis.es_depth_scale
        es_lines = sorted((ctx.transitions_es.f_minus, ctx.transitions_es.f_plus))
        for i, es_f in enumerate(es_lines):
            ref_depth = gs_dips[min(i, len(gs_dips) - 1)][1]
            es_dips.append((es_f, scale * ref_depth, fwhm))
    return gs_dips, es_dips


def synth_spectrum(config: SpectrumConfig,
                   profile: CalibrationProfile = None) -> Spectrum:
    """Synthesize one CW-PDMR spectrum (photocurrent vs MW frequency)."""
    if profile is None:
        profile = default_profile()
    freqs = config.freq_grid
    power = config.optical_power
    contexts = family_contexts(config.field, profile)
    mw_off = _mw_for(config, profile, on=False)

    bg = background_current(profile.photophysics, power)
    baselines = []
    for ctx in contexts:
        baselines.append(nv_current(solve_cw(ctx.params, power, mw_off,
                                             ctx.transitions, ctx.mixing_gs,
                                             ctx.mixing_es)))
    baseline = float(sum(baselines) + bg)

    fwhm = linewidth_model(
        mw_off.rabi, mw_off.dephasing,
        profile.photophysics.pump_rate_coeff * power,
        profile.photophysics.pump_linewidth_coeff,
        profile.photophysics.repolarization_coeff,
    ) if power > 0 else 2.0 * mw_off.dephasing

    if power == 0.0 or baseline == 0.0:
        current = np.full_like(freqs, baseline)
    elif config.method == "full":
        current = np.full_like(freqs, bg)
        for ctx, b_f in zip(contexts, baselines):
            fam = np.empty_like(freqs)
            for i, f in enumerate(freqs):
                mw = _mw_for(config, profile, frequency=f, on=True)
                fam[i] = nv_current(solve_cw(ctx.params, power, mw,
                                             ctx.transitions, ctx.mixing_gs,
                                             ctx.mixing_es))
            if config.include_excited:
                _gs, es_dips = _family_dips(ctx, config, profile, fwhm)
                for center, depth, width in es_dips:
                    fam = fam - b_f * depth * _lorentzian(freqs, center, width)
            current = current + fam
    else:
        current = np.full_like(freqs, bg)
        for ctx, b_f in zip(contexts, baselines):
            gs_dips, es_dips = _family_dips(ctx, config, profile, fwhm)
            dip_sum = np.zeros_like(freqs)
            for center, depth, width in gs_dips + es_dips:
                dip_sum += depth * _lorentzian(freqs, center, width)
            current = current + b_f * (1.0 - dip_sum)

    noise_rms = 0.0
    if config.noise_rms is not None and config.noise_rms > 0:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed]))
        current = current + rng.normal(0.0, config.noise_rms, size=freqs.size)
        noise_rms = float(config.noise_rms)

    contrast = np.zeros_like(freqs) if baseline == 0 else (baseline - current) / baseline
    metadata = {
        "field_tesla": config.field.magnitude,
        "field_direction": tuple(config.field.direction.array),
        "optical_power_w": power,
        "seed": config.seed,
        "profile": profile.name,
        "method": config.method,
        "include_excited": config.include_excited,
    }
    return Spectrum(freqs=freqs, current=current, contrast_trace=contrast,
                    baseline=baseline, noise_rms=noise_rms, metadata=metadata)


def field_map(sweep, config: SpectrumConfig,
              profile: CalibrationProfile = None,
              magnet: MagnetModel = None) -> PDMRMap:
    """One spectrum per sweep value, stacked into a map.

    ``sweep`` holds field magnitudes (T), or magnet distances (m) when a
    magnet model is given. Noise, when configured, is drawn from a per-row
    seeded stream so the result does not depend on evaluation order.
    """
    if profile is None:
        profile = default_profile()
    sweep = np.asarray(sweep, dtype=float)
    if sweep.size == 0:
        raise SpectraError("sweep must not be empty")
    if magnet is not None:
        fields = np.array([magnet_field(magnet, d) for d in sweep])
    else:
        fields = sweep

    rows = []
    for i, b in enumerate(fields):
        f = MagneticField(magnitude=float(b), direction=config.field.direction)
        row_cfg = replace(config, field=f, noise_rms=None)
        spec = synth_spectrum(row_cfg, profile)
        row = spec.current
        if config.noise_rms is not None and config.noise_rms > 0:
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
            row = row + rng.normal(0.0, config.noise_rms, size=row.size)
        rows.append(row)

    metadata = {
        "field_direction": tuple(config.field.direction.array),
        "optical_power_w": config.optical_power,
        "seed": config.seed,
        "profile": profile.name,
        "method": config.method,
        "include_excited": config.include_excited,
        "sweep_kind": "distance" if magnet is not None else "field",
    }
    return PDMRMap(sweep_values=fields, freqs=config.freq_grid,
                   matrix=np.vstack(rows), metadata=metadata)
