"""Carrier transport between the graphitic electrodes.

The junction is treated as a homogeneous slab: carrier densities n = tau*Gamma
follow from the generation rates, the photocurrent density is
j = e*(n*v_e + p*v_h) with field-dependent drift velocities, and the two
contacts add an ohmic series resistance. Drift saturation uses the
Caughey-Thomas form v = mu*E / (1 + (mu*E/v_sat)^k)^(1/k); the shipped
exponent is k = 2, which reconciles a cleanly ohmic response below 5 V with
a current within 5% of the velocity-saturation asymptote at 60 V over a
10 um gap (the single-pole k = 1 form cannot do both).
"""

from dataclasses import dataclass

import numpy as np

from .constants import E_CHARGE


class TransportError(ValueError):
    """Raised for invalid transport input or a failed circuit solve."""


@dataclass(frozen=True)
class TransportParams:
    """Mobilities, lifetimes, saturation velocities and device geometry."""

    mu_e: float                  # m^2/(V s)
    mu_h: float                  # m^2/(V s)
    tau_e: float                 # s
    tau_h: float                 # s
    vsat_e: float                # m/s
    vsat_h: float                # m/s
    gap: float                   # m, electrode spacing
    cross_section: float         # m^2, effective collection area
    contact_resistance: float    # Ohm per contact
    saturation_exponent: float = 2.0

    def __post_init__(self):
        for name in ("mu_e", "mu_h", "tau_e", "tau_h", "vsat_e", "vsat_h",
                     "gap", "cross_section", "contact_resistance",
                     "saturation_exponent"):
            if getattr(self, name) <= 0:
                raise TransportError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class IVPoint:
    """One solved bias point of the series circuit."""

    voltage: float    # V, applied
    field: float      # V/m, at the junction
    current: float    # A
    regime: str       # "ohmic" or "saturated"


@dataclass(frozen=True)
class ConductivityResult:
    """Photoconductivity with the carrier densities it came from."""

    sigma: float   # S/m
    n: float       # m^-3, electrons
    p: float       # m^-3, holes


def drift_velocity(mu: float, vsat: float, field, exponent: float = 2.0):
    """Field-dependent drift velocity, bounded by vsat. Accepts arrays."""
    field = np.asarray(field, dtype=float)
    if np.any(field < 0):
        raise TransportError("field must be >= 0")
    x = mu * field / vsat
    v = mu * field / (1.0 + x ** exponent) ** (1.0 / exponent)
    return v if v.ndim else float(v)


def conductivity(gamma_e: float, gamma_h: float,
                 params: TransportParams) -> ConductivityResult:
    """Low-field photoconductivity sigma = e*(tau_e G_e mu_e + tau_h G_h mu_h)."""
    if gamma_e < 0 or gamma_h < 0:
        raise TransportError("generation rates must be >= 0")
    n = params.tau_e * gamma_e
    p = params.tau_h * gamma_h
    sigma = E_CHARGE * (n * params.mu_e + p * params.mu_h)
    return ConductivityResult(sigma=sigma, n=n, p=p)


def _current_at_field(field: float, n: float, p: float,
                      params: TransportParams) -> float:
    ve = drift_velocity(params.mu_e, params.vsat_e, field, params.saturation_exponent)
    vh = drift_velocity(params.mu_h, params.vsat_h, field, params.saturation_exponent)
    return E_CHARGE * (n * ve + p * vh) * params.cross_section


def junction_current(voltage: float, generation, params: TransportParams,
                     max_iter: int = 200) -> IVPoint:
    """Solve U = I*(2 R_c) + E*gap for the series contact + junction circuit.

    Bisection on the junction field (the current is monotone in E);
    converges to a series-consistency residual below 1e-10 * U.
    """
    if voltage < 0:
        raise TransportError(f"voltage must be >= 0, got {voltage}")
    gamma_e, gamma_h = generation
    dens = conductivity(gamma_e, gamma_h, params)
    n, p = dens.n, dens.p

    if voltage == 0.0:
        return IVPoint(voltage=0.0, field=0.0, current=0.0, regime="ohmic")

    r_series = 2.0 * params.contact_resistance

    def mismatch(field):
        return field * params.gap + _current_at_field(field, n, p, params) * r_series \
            - voltage

    lo, hi = 0.0, voltage / params.gap
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo > 0 or f_hi < 0:
        raise TransportError("junction solve could not bracket the bias point")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mismatch(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * (voltage / params.gap):
            break
    else:
        raise TransportError(f"junction solve did not converge at U = {voltage} V")

    field = 0.5 * (lo + hi)
    current = _current_at_field(field, n, p, params)
    residual = abs(current * r_series + field * params.gap - voltage)
    if residual > 1e-10 * voltage:
        raise TransportError(
            f"junction solve residual {residual} exceeds tolerance at U = {voltage} V"
        )

    linear = E_CHARGE * (n * params.mu_e + p * params.mu_h) * field * params.cross_section
    ohmic = linear == 0.0 or current >= 0.9 * linear
    return IVPoint(voltage=voltage, field=field, current=current,
                   regime="ohmic" if ohmic else "saturated")


def iv_curve(voltages, generation, params: TransportParams) -> list:
    """Pointwise junction_current over a sorted, nonnegative voltage list."""
    voltages = np.asarray(voltages, dtype=float)
    if voltages.size and np.any(np.diff(voltages) < 0):
        raise TransportError("voltages must be sorted ascending")
    return [junction_current(float(u), generation, params) for u in voltages]
