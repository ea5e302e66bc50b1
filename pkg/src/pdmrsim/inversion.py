"""Inverse problems: dip detection, Lorentzian fits, field reconstruction
and power-curve parameter estimation on a shared least-squares core.

The solver is a damped nonlinear least-squares wrapper (bounded
trust-region reflective under the hood) returning a uniform FitResult with
a covariance estimated from J^T J scaled by the residual variance; 95%
intervals are 1.96 sigma throughout. Field inversion matches measured dip
centers to model transition frequencies (full diagonalization through the
crystal geometry) with minimal-cost assignment, seeded by a magnitude grid
because the objective is multimodal near the level anticrossings.
"""

import warnings
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.optimize import least_squares as _scipy_lsq
from scipy.optimize import linear_sum_assignment

from .calibration import CalibrationProfile, default_profile
from .geometry import MagneticField, UnitVector, direction_from_miller, nv_families
from .photodynamics import PowerCurveParams, photocurrent_model
from .spectra import Spectrum, effective_projection
from .spin_model import SpinSystem, transition_frequencies


class InversionError(ValueError):
    """Raised for invalid inversion input."""


@dataclass(frozen=True)
class DipEstimate:
    """One detected or fitted photocurrent dip."""

    center: float                 # Hz
    fwhm: float                   # Hz
    depth: float                  # A (absolute dip depth)
    center_ci95: float = 0.0      # Hz, 95% half-width (0 before fitting)
    fwhm_ci95: float = 0.0
    depth_ci95: float = 0.0


@dataclass(frozen=True)
class FitResult:
    """Converged (or best-effort) least-squares outcome."""

    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    singular: bool = False        # covariance came from a pseudo-inverse
    wide_intervals: bool = False  # interval larger than the parameter

    def ci95(self) -> np.ndarray:
        return 1.96 * np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def least_squares(model, data, init, bounds=None, max_nfev=2000) -> FitResult:
    """Fit model(x, params) -> y to (x, y) data by damped least squares.

    Convergence at relative step < 1e-10 or gradient norm < 1e-12; hitting
    the evaluation cap returns converged=False with the best parameters.
    A singular normal matrix falls back to the pseudo-inverse and sets the
    ``singular`` flag.
    """
    x, y = data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    init = np.atleast_1d(np.asarray(init, dtype=float))
    if x.size < init.size:
        raise InversionError(
            f"need at least {init.size} data points, got {x.size}"
        )
    if not np.all(np.isfinite(init)):
        raise InversionError("initial parameters must be finite")

    def residuals(p):
        return np.asarray(model(x, p), dtype=float) - y

    if bounds is None:
        bounds = (-np.inf, np.inf)
    res = _scipy_lsq(residuals, init, bounds=bounds, method="trf",
                     xtol=1e-10, gtol=1e-12, ftol=1e-12, max_nfev=max_nfev)

    jac = res.jac
    n_pts, n_par = jac.shape
    dof = max(n_pts - n_par, 1)
    variance = 2.0 * res.cost / dof
    jtj = jac.T @ jac
    singular = False
    try:
        cov = np.linalg.inv(jtj) * variance
        if not np.all(np.isfinite(cov)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj) * variance
        singular = True
        warnings.warn("singular normal matrix; covariance from pseudo-inverse",
                      RuntimeWarning, stacklevel=2)

    ci = 1.96 * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    wide = bool(np.any(ci > np.abs(res.x) + 1e-300))
    return FitResult(
        params=res.x,
        covariance=cov,
        residual_norm=float(np.sqrt(2.0 * res.cost)),
        converged=bool(res.status > 0),
        iterations=int(res.nfev),
        singular=singular,
        wide_intervals=wide,
    )


def _noise_estimate(current: np.ndarray) -> float:
    # robust high-frequency noise scale; zero for smooth synthetic data
    d = np.diff(current)
    return 1.4826 * float(np.median(np.abs(d - np.median(d)))) / np.sqrt(2.0)


def detect_peaks(spectrum: Spectrum, k: float = 3.0) -> list:
    """Initial dip guesses: local minima below baseline - k*noise.

    Minima are merged within half an estimated FWHM and sorted by frequency.
    Returns an empty list for a flat spectrum.
    """
    freqs = np.asarray(spectrum.freqs, dtype=float)
    current = np.asarray(spectrum.current, dtype=float)
    if freqs.size < 5:
        raise InversionError("need at least 5 points to detect dips")

    baseline = float(np.median(current))
    noise = spectrum.noise_rms or _noise_estimate(current)
    floor = max(k * noise, 1e-9 * max(abs(baseline), 1e-300))
    threshold = baseline - floor

    minima = []
    for i in range(1, freqs.size - 1):
        if current[i] <= current[i - 1] and current[i] <= current[i + 1] \
                and current[i] < threshold:
            if minima and current[i] == current[minima[-1]] \
                    and i == minima[-1] + 1:
                continue  # plateau: keep the first sample
            minima.append(i)
    if not minima:
        return []

    def width_at_half(i):
        half = baseline - 0.5 * (baseline - current[i])
        j = i
        while j > 0 and current[j] < half:
            j -= 1
        lo = freqs[j]
        j = i
        while j < freqs.size - 1 and current[j] < half:
            j += 1
        return max(freqs[j] - lo, freqs[1] - freqs[0])

    dips = [(freqs[i], width_at_half(i), baseline - current[i]) for i in minima]
    dips.sort()
    merged = [dips[0]]
    for c, w, d in dips[1:]:
        c0, w0, d0 = merged[-1]
        if c - c0 < 0.5 * max(w, w0):
            if d > d0:
                merged[-1] = (c, w, d)
        else:
            merged.append((c, w, d))
    return [DipEstimate(center=c, fwhm=w, depth=d) for c, w, d in merged]


def _dip_model(x, p):
    """Baseline minus a sum of Lorentzian dips; p = [b0, (c, w, a) x n]."""
    y = np.full_like(x, p[0])
    for i in range(1, len(p), 3):
        c, w, a = p[i], p[i + 1], p[i + 2]
        y = y - a / (1.0 + (2.0 * (x - c) / w) ** 2)
    return y


def fit_lorentzians(spectrum: Spectrum, n_dips: int = None):
    """Simultaneous baseline + n-Lorentzian fit of a spectrum.

    Returns (dip estimates with 95% intervals, FitResult). Non-convergence
    is reported through the FitResult, with best-effort parameters.
    """
    freqs = np.asarray(spectrum.freqs, dtype=float)
    current = np.asarray(spectrum.current, dtype=float)
    guesses = detect_peaks(spectrum)
    if n_dips is None:
        n_dips = len(guesses)
    if n_dips < 1:
        raise InversionError("fit_lorentzians requires n_dips >= 1")

    guesses = sorted(guesses, key=lambda d: -d.depth)[:n_dips]
    guesses = sorted(guesses, key=lambda d: d.center)
    span = freqs[-1] - freqs[0]
    while len(guesses) < n_dips:  # seed extras across the grid
        frac = (len(guesses) + 0.5) / n_dips
        guesses.append(DipEstimate(center=freqs[0] + frac * span,
                                   fwhm=span / 20.0,
                                   depth=max(np.median(current) - current.min(), 1e-12)))
        guesses.sort(key=lambda d: d.center)

    # scale currents to order unity for a well-conditioned jacobian
    scale = max(abs(np.median(current)), abs(current).max(), 1e-300)
    init = [np.median(current) / scale]
    lo, hi = [0.0], [np.inf]
    for g in guesses:
        init += [g.center, max(g.fwhm, span / freqs.size), g.depth / scale]
        lo += [freqs[0] - span, span / (10 * freqs.size), 0.0]
        hi += [freqs[-1] + span, 10 * span, np.inf]

    fit = least_squares(_dip_model, (freqs, current / scale), init,
                        bounds=(lo, hi))
    ci = fit.ci95()
    dips = []
    for i in range(1, len(fit.params), 3):
        dips.append(DipEstimate(
            center=float(fit.params[i]),
            fwhm=float(fit.params[i + 1]),
            depth=float(fit.params[i + 2] * scale),
            center_ci95=float(ci[i]),
            fwhm_ci95=float(ci[i + 1]),
            depth_ci95=float(ci[i + 2] * scale),
        ))
    dips.sort(key=lambda d: d.center)
    rescaled = FitResult(
        params=fit.params, covariance=fit.covariance,
        residual_norm=fit.residual_norm * scale, converged=fit.converged,
        iterations=fit.iterations, singular=fit.singular,
        wide_intervals=fit.wide_intervals,
    )
    return dips, rescaled


@dataclass(frozen=True)
class AlignedInversion:
    """Closed-form axial-field estimate with its consistency check."""

    b_par: float          # T
    sum_deviation: float  # Hz, |f_plus + f_minus - 2D|
    consistent: bool      # within the tolerance (misalignment/ES-line flag)


def invert_aligned(f_minus: float, f_plus: float, d: float = None,
                   gamma: float = None, sum_tolerance: float = 20e6) -> AlignedInversion:
    """Invert |D +- gamma*B| for the axial field component.

    Flags the result when f_plus + f_minus deviates from 2D by more than the
    tolerance, which indicates misalignment or an excited-state line.
    """
    from .constants import D_GS, GAMMA_E

    d = D_GS if d is None else d
    gamma = GAMMA_E if gamma is None else gamma
    if f_plus < f_minus:
        raise InversionError("invert_aligned requires f_plus >= f_minus")
    b_par = (f_plus - f_minus) / (2.0 * gamma)
    dev = abs(f_plus + f_minus - 2.0 * d)
    return AlignedInversion(b_par=b_par, sum_deviation=dev,
                            consistent=bool(dev <= sum_tolerance))


_CLASS_DIRECTIONS = {
    "axis_100": (1, 0, 0),
    "axis_111": (1, 1, 1),
}


def model_line_frequencies(magnitude: float, direction: UnitVector,
                           profile: CalibrationProfile,
                           residual_transverse: float = None) -> np.ndarray:
    """Distinct ground-state transition frequencies for a trial field."""
    if residual_transverse is None:
        residual_transverse = profile.synthesis.residual_transverse
    field = MagneticField(magnitude=abs(float(magnitude)), direction=direction)
    lines = []
    for fam in nv_families():
        proj = effective_projection(field, fam, residual_transverse)
        sys = SpinSystem(d_split=profile.spin.d_gs, gamma=profile.spin.gamma_e,
                         projection=proj)
        tr = transition_frequencies(sys)
        lines.extend((tr.f_minus, tr.f_plus))
    return np.array(sorted(lines))


def _assignment_cost(measured: np.ndarray, model: np.ndarray):
    """Minimal-cost matching of measured dips to model lines."""
    cost = np.abs(measured[:, None] - model[None, :])
    rows, cols = linear_sum_assignment(cost)
    return model[cols], float(np.sum(cost[rows, cols] ** 2))


def invert_field(dips, direction_class: str,
                 profile: CalibrationProfile = None,
                 residual_transverse: float = None,
                 grid_step: float = 1e-3, grid_max: float = 150e-3):
    """Reconstruct the applied field from fitted dip centers.

    direction_class 'axis_100'/'axis_111' fit the magnitude along the fixed
    crystal direction; 'free' also fits the direction and needs >= 4 dips.
    Returns (MagneticField, FitResult).
    """
    if profile is None:
        profile = default_profile()
    centers = np.array(sorted(d.center for d in dips), dtype=float)
    if direction_class in _CLASS_DIRECTIONS:
        if centers.size < 2:
            raise InversionError(
                f"direction class {direction_class!r} needs >= 2 dips"
            )
        free = False
        direction = direction_from_miller(*_CLASS_DIRECTIONS[direction_class])
    elif direction_class == "free":
        if centers.size < 4:
            raise InversionError("free direction class needs >= 4 dips")
        free = True
        direction = None
    else:
        raise InversionError(f"unknown direction class {direction_class!r}")

    def dir_from_angles(theta, phi):
        return UnitVector.from_array([
            np.sin(theta) * np.cos(phi),
            np.sin(theta) * np.sin(phi),
            np.cos(theta),
        ])

    def cost_for(magnitude, direction):
        model = model_line_frequencies(magnitude, direction, profile,
                                       residual_transverse)
        _, cost = _assignment_cost(centers, model)
        return cost

    # multimodal near the anticrossings: grid-seed the magnitude
    grid = np.arange(0.0, grid_max + grid_step / 2, grid_step)
    if free:
        golden = np.pi * (3.0 - np.sqrt(5.0))
        n_dir = 48
        seeds = []
        for j in range(n_dir):
            z = 1.0 - (j + 0.5) / n_dir  # upper hemisphere is enough (B ~ -B)
            theta = np.arccos(z)
            phi = (j * golden) % (2 * np.pi)
            seeds.append((theta, phi))
        best = None
        for theta, phi in seeds:
            d_try = dir_from_angles(theta, phi)
            for m in grid[::4]:
                c = cost_for(m, d_try)
                if best is None or c < best[0]:
                    best = (c, m, theta, phi)
        _, m0, th0, ph0 = best

        def residual_model(x, p):
            mdl = model_line_frequencies(p[0], dir_from_angles(p[1], p[2]),
                                         profile, residual_transverse)
            matched, _ = _assignment_cost(centers, mdl)
            return matched

        fit = least_squares(residual_model, (np.arange(centers.size), centers),
                            [m0, th0, ph0],
                            bounds=([0.0, 0.0, -2 * np.pi],
                                    [grid_max * 2, np.pi, 4 * np.pi]))
        magnitude = abs(float(fit.params[0]))
        direction = dir_from_angles(float(fit.params[1]), float(fit.params[2]))
    else:
        costs = [cost_for(m, direction) for m in grid]
        m0 = grid[int(np.argmin(costs))]

        def residual_model(x, p):
            mdl = model_line_frequencies(p[0], direction, profile,
                                         residual_transverse)
            matched, _ = _assignment_cost(centers, mdl)
            return matched

        fit = least_squares(residual_model, (np.arange(centers.size), centers),
                            [m0], bounds=([0.0], [grid_max * 2]))
        magnitude = abs(float(fit.params[0]))

    return MagneticField(magnitude=magnitude, direction=direction), fit


def fit_power_curve(data):
    """Fit the two-parameter photocurrent power law to (P, I) samples.

    Needs >= 3 points; data confined to a single regime still converges but
    is flagged through FitResult.wide_intervals.
    """
    powers, currents = data
    powers = np.asarray(powers, dtype=float)
    currents = np.asarray(currents, dtype=float)
    if powers.size < 3:
        raise InversionError("fit_power_curve needs at least 3 points")
    if np.any(powers <= 0) or np.any(currents <= 0):
        raise InversionError("powers and currents must be positive")

    # inits: beta from the high-power secant, alpha near the mid data
    beta0 = powers[-1] / currents[-1]
    alpha0 = float(np.median(powers))

    def model(x, p):
        a, b = np.exp(p)
        return np.log((x ** 2 / (a * b)) / (1.0 + x / a))

    fit = least_squares(model, (powers, np.log(currents)),
                        np.log([alpha0, beta0]))
    alpha, beta = np.exp(fit.params)
    # propagate log-space covariance to the physical parameters
    jac_diag = np.array([alpha, beta])
    cov = fit.covariance * np.outer(jac_diag, jac_diag)
    out = FitResult(
        params=np.array([alpha, beta]), covariance=cov,
        residual_norm=fit.residual_norm, converged=fit.converged,
        iterations=fit.iterations, singular=fit.singular,
        wide_intervals=bool(np.any(1.96 * np.sqrt(np.diag(cov))
                                   > np.array([alpha, beta]))),
    )
    return PowerCurveParams(alpha=float(alpha), beta=float(beta)), out
