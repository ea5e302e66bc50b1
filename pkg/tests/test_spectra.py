import time
from dataclasses import replace

import numpy as np
import pytest

from pdmrsim.calibration import default_profile
from pdmrsim.constants import D_ES, D_GS, GAMMA_E
from pdmrsim.geometry import MagneticField, UnitVector, direction_from_miller
from pdmrsim.photodynamics import MWDrive, background_current, nv_current, solve_cw
from pdmrsim.spectra import (MagnetModel, SpectraError, SpectrumConfig,
                             effective_projection, family_contexts, field_map,
                             linewidth_model, magnet_field, synth_spectrum)


@pytest.fixture(scope="module")
def profile():
    return default_profile()


def b_field(mag, direction=(1, 0, 0)):
    return MagneticField(mag, UnitVector.from_array(direction))


def zero_field_config(**kw):
    grid = np.linspace(2.77e9, 2.97e9, 2001)
    return SpectrumConfig(freq_grid=grid, field=b_field(0.0),
                          optical_power=0.1, **kw)


def count_minima(spec, floor_frac=0.005):
    cur = spec.current
    floor = floor_frac * spec.baseline
    idx = []
    for i in range(1, cur.size - 1):
        if cur[i] <= cur[i - 1] and cur[i] <= cur[i + 1] \
                and spec.baseline - cur[i] > floor:
            if idx and i == idx[-1] + 1:
                continue
            idx.append(i)
    return len(idx)


def dip_fwhm(spec):
    depth = spec.baseline - spec.current
    half = depth.max() / 2
    above = np.where(depth >= half)[0]
    i0, i1 = above[0], above[-1]

    def cross(i, j):
        return spec.freqs[i] + (half - depth[i]) * (spec.freqs[j] - spec.freqs[i]) \
            / (depth[j] - depth[i])

    return cross(i1, i1 + 1) - cross(i0 - 1, i0)


class TestZeroField:
    def test_single_dip_at_2p87(self, profile):
        t0 = time.time()
        spec = synth_spectrum(zero_field_config(), profile)
        elapsed = time.time() - t0
        i = spec.current.argmin()
        assert abs(spec.freqs[i] - 2.870e9) <= 1e6
        assert spec.contrast_trace[i] == pytest.approx(0.12, abs=0.01)
        assert dip_fwhm(spec) == pytest.approx(20e6, abs=2e6)
        assert count_minima(spec) == 1
        assert elapsed < 5.0

    def test_baseline_equals_mw_off_current(self, profile):
        spec = synth_spectrum(zero_field_config(), profile)
        ctxs = family_contexts(b_field(0.0), profile)
        direct = sum(
            nv_current(solve_cw(c.params, 0.1, MWDrive(on=False),
                                c.transitions, c.mixing_gs, c.mixing_es))
            for c in ctxs
        ) + background_current(profile.photophysics, 0.1)
        assert spec.baseline == pytest.approx(direct, rel=1e-6)
        # and the baseline does not depend on the frequency grid
        other = synth_spectrum(zero_field_config(seed=3), profile)
        assert other.baseline == spec.baseline


class TestFamilyStructure:
    @pytest.mark.parametrize("b_mT", [1.0, 5.0, 12.0, 20.0])
    def test_100_exactly_two_dips(self, profile, b_mT):
        span = max(0.12e9, 2.2 * GAMMA_E * b_mT * 1e-3 / np.sqrt(3))
        grid = np.linspace(2.87e9 - span, 2.87e9 + span, 3001)
        cfg = SpectrumConfig(freq_grid=grid, field=b_field(b_mT * 1e-3),
                             optical_power=0.1)
        spec = synth_spectrum(cfg, profile)
        assert count_minima(spec) == 2

    def test_100_dips_symmetric_about_center(self, profile):
        cfg = SpectrumConfig(freq_grid=np.linspace(2.70e9, 3.04e9, 3401),
                             field=b_field(5e-3), optical_power=0.1)
        spec = synth_spectrum(cfg, profile)
        cur = spec.current
        minima = [spec.freqs[i] for i in range(1, cur.size - 1)
                  if cur[i] <= cur[i - 1] and cur[i] <= cur[i + 1]
                  and spec.baseline - cur[i] > 0.005 * spec.baseline]
        assert len(minima) == 2
        # symmetric about the zero-field line up to the (sub-linewidth)
        # second-order transverse shift common to both dips
        center = 0.5 * (minima[0] + minima[1])
        assert abs(center - 2.87e9) <= 10e6

    def test_111_aligned_and_tilted_lines(self, profile):
        cfg = SpectrumConfig(freq_grid=np.linspace(2.45e9, 3.30e9, 4001),
                             field=b_field(10e-3, (1, 1, 1)),
                             optical_power=0.1)
        spec = synth_spectrum(cfg, profile)
        assert count_minima(spec) == 4
        # outermost dips belong to the aligned family at |D -+ gamma B|
        i_min = spec.current.argmin()
        ctx = family_contexts(cfg.field, profile)[0]
        assert abs(ctx.projection.b_perp - 0.5e-3) < 1e-6  # residual only
        expected = sorted((ctx.transitions.f_minus, ctx.transitions.f_plus))
        freqs_minima = sorted(
            spec.freqs[i] for i in range(1, spec.current.size - 1)
            if spec.current[i] <= spec.current[i - 1]
            and spec.current[i] <= spec.current[i + 1]
            and spec.baseline - spec.current[i] > 0.005 * spec.baseline
        )
        assert freqs_minima[0] == pytest.approx(expected[0], abs=2e6)
        assert freqs_minima[-1] == pytest.approx(expected[1], abs=2e6)

    def test_off_axis_splits_degeneracy(self, profile):
        # 5 degrees off <100> at 20 mT: at least 3 resolvable minima
        tilt = np.radians(5.0)
        direction = (np.cos(tilt), np.sin(tilt), 0.0)
        cfg = SpectrumConfig(freq_grid=np.linspace(2.40e9, 3.34e9, 4001),
                             field=b_field(20e-3, direction), optical_power=0.1)
        spec = synth_spectrum(cfg, profile)
        assert count_minima(spec) >= 3


class TestFastVsFull:
    def test_reference_config_within_two_percent(self, profile):
        grid = np.linspace(2.70e9, 3.04e9, 341)
        cfg = SpectrumConfig(freq_grid=grid, field=b_field(5e-3),
                             optical_power=0.1)
        fast = synth_spectrum(cfg, profile)
        full = synth_spectrum(replace(cfg, method="full"), profile)
        dev = np.abs(fast.current - full.current) / full.current
        assert dev.max() <= 0.02

    def test_zero_field_within_two_percent(self, profile):
        grid = np.linspace(2.80e9, 2.94e9, 281)
        cfg = SpectrumConfig(freq_grid=grid, field=b_field(0.0),
                             optical_power=0.1)
        fast = synth_spectrum(cfg, profile)
        full = synth_spectrum(replace(cfg, method="full"), profile)
        dev = np.abs(fast.current - full.current) / full.current
        assert dev.max() <= 0.02


class TestDeterminism:
    def test_identical_seed_bit_identical(self, profile):
        a = synth_spectrum(zero_field_config(noise_rms=1e-5, seed=11), profile)
        b = synth_spectrum(zero_field_config(noise_rms=1e-5, seed=11), profile)
        assert np.array_equal(a.current, b.current)
        assert np.array_equal(a.contrast_trace, b.contrast_trace)

    def test_different_seed_differs(self, profile):
        a = synth_spectrum(zero_field_config(noise_rms=1e-5, seed=11), profile)
        b = synth_spectrum(zero_field_config(noise_rms=1e-5, seed=12), profile)
        assert not np.array_equal(a.current, b.current)

    def test_map_rows_use_per_row_streams(self, profile):
        grid = np.linspace(2.80e9, 2.94e9, 101)
        cfg = SpectrumConfig(freq_grid=grid, field=b_field(0.0, (1, 1, 1)),
                             optical_power=0.1, noise_rms=1e-5, seed=5)
        m1 = field_map([1e-3, 2e-3, 3e-3], cfg, profile)
        m2 = field_map([1e-3, 2e-3, 3e-3], cfg, profile)
        assert np.array_equal(m1.matrix, m2.matrix)
        # a row keeps its stream regardless of the other rows
        m3 = field_map([1e-3, 2e-3], cfg, profile)
        assert np.array_equal(m3.matrix[0], m1.matrix[0])


class TestMagnetModel:
    def test_reference_distance(self):
        model = MagnetModel(surface_field=0.5, reference_distance=1e-3)
        assert magnet_field(model, 1e-3) == pytest.approx(0.5)

    def test_cube_law(self):
        model = MagnetModel(surface_field=0.5, reference_distance=1e-3)
        assert magnet_field(model, 2e-3) == pytest.approx(0.5 / 8)

    def test_reaches_sweep_limit(self):
        model = MagnetModel(surface_field=0.5, reference_distance=1e-3)
        d = 1e-3 * (0.5 / 135e-3) ** (1.0 / 3.0)
        assert magnet_field(model, d) == pytest.approx(135e-3, rel=1e-12)

    def test_invalid_distance(self):
        model = MagnetModel(surface_field=0.5, reference_distance=1e-3)
        with pytest.raises(SpectraError):
            magnet_field(model, 0.0)


class TestFieldMapBranches:
    def test_gs_branch_zero_at_gslac(self, profile):
        # perfectly aligned the ground f_minus hits zero at D/gamma exactly
        fam0_dir = direction_from_miller(1, 1, 1)
        bs = np.linspace(0.0, 135e-3, 271)
        f_minus = []
        for b in bs:
            ctx = family_contexts(MagneticField(float(b), fam0_dir), profile)[0]
            f_minus.append(ctx.transitions.f_minus)
        f_minus = np.array(f_minus)
        b_at_min = bs[int(f_minus.argmin())]
        assert abs(b_at_min - 102.5e-3) <= 0.5e-3
        # the anticrossing gap with the 0.5 mT residual stays small
        assert f_minus.min() < 25e6

    def test_es_branch_minimum_at_51mT(self, profile):
        fam0_dir = direction_from_miller(1, 1, 1)
        bs = np.linspace(30e-3, 70e-3, 161)
        f_es = []
        for b in bs:
            ctx = family_contexts(MagneticField(float(b), fam0_dir), profile)[0]
            f_es.append(ctx.transitions_es.f_minus)
        b_at_min = bs[int(np.argmin(f_es))]
        assert abs(b_at_min - 51e-3) <= 1e-3

    def test_includes_excited_overlay(self, profile):
        grid = np.linspace(0.5e9, 3.1e9, 2601)
        cfg = SpectrumConfig(freq_grid=grid, field=b_field(20e-3, (1, 1, 1)),
                             optical_power=0.1, include_excited=True)
        spec = synth_spectrum(cfg, profile)
        ctx = family_contexts(cfg.field, profile)[0]
        es_f = ctx.transitions_es.f_minus
        i_es = int(np.argmin(np.abs(grid - es_f)))
        gs_depth = spec.baseline - spec.current.min()
        es_depth = spec.baseline - spec.current[i_es]
        assert es_depth > 0.02 * gs_depth     # visible
        assert es_depth < 0.6 * gs_depth      # but faint

    def test_lac_contrast_collapse(self, profile):
        from pdmrsim.photodynamics import pdmr_contrast

        fam0_dir = direction_from_miller(1, 1, 1)

        def on_branch_contrast(b):
            ctx = family_contexts(MagneticField(b, fam0_dir), profile)[0]
            mw = MWDrive(frequency=ctx.transitions.f_minus,
                         rabi=profile.mw.rabi, dephasing=profile.mw.dephasing,
                         on=True)
            return pdmr_contrast(ctx.params, 0.1, mw, ctx.transitions,
                                 ctx.mixing_gs, ctx.mixing_es,
                                 include_background=False)

        mid = on_branch_contrast(90e-3)
        at_eslac = on_branch_contrast(51e-3)
        at_gslac = on_branch_contrast(102.5e-3)
        assert at_eslac < 0.5 * mid
        assert at_gslac < 0.5 * mid


class TestLinewidthModel:
    def test_bare_width(self):
        assert linewidth_model(0.0, 3e6, 0.0) == pytest.approx(6e6)

    def test_monotone_in_pump(self, profile):
        ph = profile.photophysics
        pumps = ph.pump_rate_coeff * np.linspace(0.05, 1.0, 24)
        widths = [linewidth_model(profile.mw.rabi, profile.mw.dephasing, k,
                                  ph.pump_linewidth_coeff,
                                  ph.repolarization_coeff)
                  for k in pumps]
        assert np.all(np.diff(widths) > 0)

    def test_reference_width(self, profile):
        ph = profile.photophysics
        w = linewidth_model(profile.mw.rabi, profile.mw.dephasing,
                            ph.pump_rate_coeff * 0.1,
                            ph.pump_linewidth_coeff, ph.repolarization_coeff)
        assert w == pytest.approx(20e6, rel=0.10)

    def test_grows_with_rabi(self, profile):
        ph = profile.photophysics
        k = ph.pump_rate_coeff * 0.1
        w1 = linewidth_model(2e6, 3e6, k, ph.pump_linewidth_coeff,
                             ph.repolarization_coeff)
        w2 = linewidth_model(8e6, 3e6, k, ph.pump_linewidth_coeff,
                             ph.repolarization_coeff)
        assert w2 > w1


class TestValidation:
    def test_grid_must_be_sorted(self, profile):
        with pytest.raises(SpectraError):
            SpectrumConfig(freq_grid=np.array([2.9e9, 2.8e9]),
                           field=b_field(0.0), optical_power=0.1)

    def test_unknown_method(self):
        with pytest.raises(SpectraError):
            SpectrumConfig(freq_grid=np.linspace(2.8e9, 2.9e9, 10),
                           field=b_field(0.0), optical_power=0.1,
                           method="turbo")

    def test_empty_sweep(self, profile):
        cfg = SpectrumConfig(freq_grid=np.linspace(2.8e9, 2.9e9, 10),
                             field=b_field(0.0), optical_power=0.1)
        with pytest.raises(SpectraError):
            field_map([], cfg, profile)

    def test_residual_transverse_in_quadrature(self, profile):
        from pdmrsim.geometry import nv_families
        field = MagneticField(10e-3, UnitVector.from_array([1, 1, 1]))
        fam = nv_families()[0]
        proj = effective_projection(field, fam, 0.5e-3)
        assert proj.b_par == pytest.approx(10e-3, rel=1e-9)
        assert proj.b_perp == pytest.approx(0.5e-3, rel=1e-9)
