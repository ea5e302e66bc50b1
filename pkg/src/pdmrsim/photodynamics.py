"""Nine-level CW rate model of the NV-/NV0 charge-spin cycle.

Levels (index order used everywhere):

    0..2  NV- ground triplet,  m_s character -1, 0, +1
    3..5  NV- excited triplet, m_s character -1, 0, +1
    6     NV- metastable singlet (the two physical singlets lumped; only the
          slow lower-singlet decay matters for the CW bottleneck)
    7     NV0 ground state
    8     NV0 excited state

Processes per unit optical power P carry Hz/W coefficients; fixed decays Hz.
Ionization leaves NV- from the excited triplet (electron to the conduction
band); back-conversion returns NV0 to NV- from the NV0 excited state, where
the second photon lifts a valence-band electron into the emptied ground
orbital and leaves a free hole. Spin-labeled transfer rates are rotated by
the ground-/excited-state mixing tables so that level anticrossings
homogenize the spin selectivity and quench the MW response.

The MW drive is incoherent (CW regime, dephasing faster than Rabi): a
Lorentzian rate W(delta) = (rabi^2 / 2*G2) / (1 + (delta/G2)^2) with
G2 = dephasing + pump_linewidth_coeff * pump_rate, applied to every
transition of the supplied sets at its own detuning.
"""

from dataclasses import dataclass, replace

import numpy as np

from .constants import E_CHARGE
from .spin_model import MixingMatrix, TransitionSet

N_LEVELS = 9
_GS = (0, 1, 2)
_ES = (3, 4, 5)
_SINGLET = 6
_NV0_GS = 7
_NV0_ES = 8

# columns with no outflow in the dark (P = 0, MW off)
_DARK_STABLE = (0, 1, 2, 7)


class PhotodynamicsError(ValueError):
    """Raised for invalid rate-model input."""


class SteadyStateError(RuntimeError):
    """Raised when the rate matrix admits no unique steady state."""


@dataclass(frozen=True)
class PhotophysicsParams:
    """Optical, ionization and device parameters of the charge-spin cycle.

    All two-photon-step coefficients are linear in optical power (Hz/W);
    the spin selectivity isc_es_ms1 > isc_es_ms0 is what makes the
    photocurrent spin-dependent.
    """

    pump_rate_coeff: float        # Hz/W, 3A2 -> 3E per unit power
    radiative_rate: float         # Hz, 3E -> 3A2
    isc_es_ms0: float             # Hz, 3E(m_s=0) -> singlet
    isc_es_ms1: float             # Hz, 3E(m_s=+-1) -> singlet
    singlet_decay_ms0_frac: float  # branching of singlet decay into m_s=0
    singlet_rate: float           # Hz, singlet -> 3A2
    ionize_coeff: float           # Hz/W, 3E -> conduction band
    nv0_pump_coeff: float         # Hz/W, NV0 2E -> 2A
    nv0_radiative: float          # Hz, NV0 2A -> 2E
    backconvert_coeff: float      # Hz/W, VB electron -> NV0 (from NV0 ES)
    nv_density: float             # m^-3
    excitation_volume: float      # m^3
    pump_linewidth_coeff: float = 0.16   # optical contribution to MW dephasing
    repolarization_coeff: float = 0.20   # optical repolarization per pump rate
    background_current_coeff: float = 0.0  # A/W^2, MW-independent impurity term

    def __post_init__(self):
        rates = {
            "pump_rate_coeff": self.pump_rate_coeff,
            "radiative_rate": self.radiative_rate,
            "isc_es_ms0": self.isc_es_ms0,
            "isc_es_ms1": self.isc_es_ms1,
            "singlet_rate": self.singlet_rate,
            "ionize_coeff": self.ionize_coeff,
            "nv0_pump_coeff": self.nv0_pump_coeff,
            "nv0_radiative": self.nv0_radiative,
            "backconvert_coeff": self.backconvert_coeff,
            "nv_density": self.nv_density,
            "excitation_volume": self.excitation_volume,
        }
        for name, value in rates.items():
            if value < 0:
                raise PhotodynamicsError(f"{name} must be >= 0, got {value}")
        if self.ionize_coeff <= 0:
            raise PhotodynamicsError("ionize_coeff must be > 0")
        # spin selectivity points one way only; the degenerate equal-rate
        # case is allowed so symmetry (zero contrast) can be exercised
        if self.isc_es_ms1 < self.isc_es_ms0:
            raise PhotodynamicsError(
                "spin selectivity requires isc_es_ms1 >= isc_es_ms0, got "
                f"{self.isc_es_ms1} < {self.isc_es_ms0}"
            )
        if not 0.0 <= self.singlet_decay_ms0_frac <= 1.0:
            raise PhotodynamicsError("singlet_decay_ms0_frac must be in [0, 1]")

    def with_updates(self, **kwargs) -> "PhotophysicsParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class MWDrive:
    """Continuous microwave drive, modeled as an incoherent rate."""

    frequency: float = 2.87e9   # Hz
    rabi: float = 0.0           # Hz
    dephasing: float = 3e6      # Hz, bare half-width scale
    target: str = "minus_one"   # "minus_one" or "plus_one"
    on: bool = False

    def __post_init__(self):
        if self.rabi < 0:
            raise PhotodynamicsError(f"rabi must be >= 0, got {self.rabi}")
        if self.dephasing <= 0:
            raise PhotodynamicsError(f"dephasing must be > 0, got {self.dephasing}")
        if self.target not in ("minus_one", "plus_one"):
            raise PhotodynamicsError(f"unknown MW target {self.target!r}")


@dataclass(frozen=True)
class Populations:
    """Nine occupation fractions, summing to one."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (N_LEVELS,):
            raise PhotodynamicsError(f"expected {N_LEVELS} populations, got {v.shape}")
        if np.any(v < -1e-12):
            raise PhotodynamicsError(f"negative population: {v.min()}")
        if abs(v.sum() - 1.0) > 1e-10:
            raise PhotodynamicsError(f"populations sum to {v.sum()}, not 1")

    @property
    def nv_minus_gs(self) -> np.ndarray:
        return self.vector[list(_GS)]

    @property
    def nv_minus_es(self) -> np.ndarray:
        return self.vector[list(_ES)]

    @property
    def singlet(self) -> float:
        return float(self.vector[_SINGLET])

    @property
    def nv0_gs(self) -> float:
        return float(self.vector[_NV0_GS])

    @property
    def nv0_es(self) -> float:
        return float(self.vector[_NV0_ES])


@dataclass(frozen=True)
class SteadyStateResult:
    """Steady-state populations and the derived observables."""

    populations: Populations
    gamma_e: float            # s^-1 m^-3, electron generation per volume
    gamma_h: float            # s^-1 m^-3, hole generation per volume
    photocurrent_flux: float  # s^-1, carrier pairs over the excitation volume
    pl_rate: float            # s^-1, radiative photons over the volume


@dataclass(frozen=True)
class PowerCurveParams:
    """Closed-form photocurrent law I = (P^2/(alpha*beta)) / (1 + P/alpha)."""

    alpha: float   # W, saturation power of the optical transition
    beta: float    # W/A, inverse responsivity scale

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise PhotodynamicsError("alpha and beta must be > 0")


_IDENTITY_MIX = None


def _identity_mixing() -> MixingMatrix:
    global _IDENTITY_MIX
    if _IDENTITY_MIX is None:
        _IDENTITY_MIX = MixingMatrix(probs=np.eye(3), levels=np.zeros(3))
    return _IDENTITY_MIX


def mw_rate(mw: MWDrive, detuning: float, pump_rate: float,
            pump_linewidth_coeff: float) -> float:
    """Incoherent drive rate at the given detuning (Hz in, s^-1 out)."""
    g2 = mw.dephasing + pump_linewidth_coeff * pump_rate
    peak = mw.rabi ** 2 / (2.0 * g2)
    return peak / (1.0 + (detuning / g2) ** 2)


def build_rate_matrix(
    params: PhotophysicsParams,
    power: float,
    mw: MWDrive,
    transitions: TransitionSet = None,
    mix_gs: MixingMatrix = None,
    mix_es: MixingMatrix = None,
    es_transitions: TransitionSet = None,
) -> np.ndarray:
    """Conservative 9x9 rate matrix M with M[i, j] = rate j -> i.

    Columns sum to zero. Spin-labeled rates (ISC, singlet branching) are
    rotated by the mixing tables; pump and radiative transfer route through
    the m_s basis with the combined ground/excited overlap, which is what
    collapses optical spin polarization at an anticrossing. The MW rate is
    applied to every supplied transition at its own detuning.
    """
    if power < 0:
        raise PhotodynamicsError(f"optical power must be >= 0, got {power}")
    if mix_gs is None:
        mix_gs = _identity_mixing()
    if mix_es is None:
        mix_es = _identity_mixing()

    m = np.zeros((N_LEVELS, N_LEVELS))
    p_gs = mix_gs.probs   # [gs label, m_s]
    p_es = mix_es.probs   # [es label, m_s]

    k_pump = params.pump_rate_coeff * power
    k_ion = params.ionize_coeff * power
    k_nv0_pump = params.nv0_pump_coeff * power
    k_back = params.backconvert_coeff * power

    # optical pump / radiative decay, spin-preserving through the m_s basis
    overlap = p_gs @ p_es.T   # [gs label, es label]
    for i in range(3):
        for k in range(3):
            m[_ES[k], _GS[i]] += k_pump * overlap[i, k]
            m[_GS[i], _ES[k]] += params.radiative_rate * overlap[i, k]

    # spin-selective ISC, rotated into the excited eigenbasis
    isc_ms = np.array([params.isc_es_ms1, params.isc_es_ms0, params.isc_es_ms1])
    isc_eff = p_es @ isc_ms
    for k in range(3):
        m[_SINGLET, _ES[k]] += isc_eff[k]

    # singlet decay, branching rotated into the ground eigenbasis
    f0 = params.singlet_decay_ms0_frac
    branch_ms = np.array([(1.0 - f0) / 2.0, f0, (1.0 - f0) / 2.0])
    branch_eff = p_gs @ branch_ms
    for i in range(3):
        m[_GS[i], _SINGLET] += params.singlet_rate * branch_eff[i]

    # charge cycle: ionization from the excited triplet, back-conversion
    # from the NV0 excited state into an unpolarized ground triplet
    for k in range(3):
        m[_NV0_GS, _ES[k]] += k_ion
    m[_NV0_ES, _NV0_GS] += k_nv0_pump
    m[_NV0_GS, _NV0_ES] += params.nv0_radiative
    for i in range(3):
        m[_GS[i], _NV0_ES] += k_back / 3.0

    # incoherent MW drive on every supplied line at its own detuning
    if mw.on and mw.rabi > 0.0:
        lines = []
        for tset in (transitions, es_transitions):
            if tset is None:
                continue
            lo = _ES if tset.manifold == "excited" else _GS
            lines.append((tset.f_minus, lo[1], lo[0]))
            lines.append((tset.f_plus, lo[1], lo[2]))
        if not lines:
            raise PhotodynamicsError("MW drive is on but no transitions were given")
        for f0_line, a, b in lines:
            w = mw_rate(mw, mw.frequency - f0_line, k_pump,
                        params.pump_linewidth_coeff)
            m[b, a] += w
            m[a, b] += w

    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, -m.sum(axis=0))
    return m


def _dark_convention() -> np.ndarray:
    n = np.zeros(N_LEVELS)
    n[list(_GS)] = 1.0 / 3.0
    return n


def steady_state(rate_matrix: np.ndarray) -> Populations:
    """Unique normalized null vector of a conservative rate matrix.

    The dark matrix (no outflow from any ground level) is degenerate by
    construction; it resolves to the equal-thirds NV- ground convention.
    Any other rank deficiency raises SteadyStateError.
    """
    m = np.asarray(rate_matrix, dtype=float)
    if m.shape != (N_LEVELS, N_LEVELS):
        raise PhotodynamicsError(f"expected {N_LEVELS}x{N_LEVELS} matrix, got {m.shape}")
    col_ok = np.abs(m.sum(axis=0)) <= 1e-9 * max(np.abs(m).max(), 1.0)
    if not col_ok.all():
        raise PhotodynamicsError("rate matrix columns do not sum to zero")

    outflow = -np.diag(m)
    if all(outflow[i] == 0.0 for i in _DARK_STABLE):
        return Populations(vector=_dark_convention())

    a = m.copy()
    a[-1, :] = 1.0
    b = np.zeros(N_LEVELS)
    b[-1] = 1.0
    try:
        n = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError("singular steady-state system") from exc

    scale = np.abs(m).max()
    if np.any(n < -1e-9) or np.linalg.norm(m @ n) > 1e-10 * max(scale, 1.0):
        # distinguish a disconnected level graph from numerical trouble
        svals = np.linalg.svd(m, compute_uv=False)
        if svals[-2] < 1e-12 * max(svals[0], 1.0):
            raise SteadyStateError("rate matrix has a non-unique steady state")
        raise SteadyStateError("steady-state solve failed the residual check")

    n = np.clip(n, 0.0, None)
    n = n / n.sum()
    return Populations(vector=n)


def carrier_rates(populations: Populations, params: PhotophysicsParams,
                  power: float):
    """Electron/hole generation rates per unit volume (s^-1 m^-3).

    Electrons come from ionization out of the NV- excited triplet; holes
    from the valence-band step of the back-conversion, fed by the NV0
    excited-state population.
    """
    n_es = float(populations.nv_minus_es.sum())
    gamma_e = params.ionize_coeff * power * n_es * params.nv_density
    gamma_h = params.backconvert_coeff * power * populations.nv0_es * params.nv_density
    return gamma_e, gamma_h


def solve_cw(
    params: PhotophysicsParams,
    power: float,
    mw: MWDrive,
    transitions: TransitionSet = None,
    mix_gs: MixingMatrix = None,
    mix_es: MixingMatrix = None,
    es_transitions: TransitionSet = None,
) -> SteadyStateResult:
    """Build the rate matrix, solve it and derive the observables."""
    m = build_rate_matrix(params, power, mw, transitions, mix_gs, mix_es,
                          es_transitions)
    pops = steady_state(m)
    gamma_e, gamma_h = carrier_rates(pops, params, power)
    flux = gamma_e * params.excitation_volume
    n_es = float(pops.nv_minus_es.sum())
    pl = (params.radiative_rate * n_es + params.nv0_radiative * pops.nv0_es) \
        * params.nv_density * params.excitation_volume
    return SteadyStateResult(
        populations=pops,
        gamma_e=gamma_e,
        gamma_h=gamma_h,
        photocurrent_flux=flux,
        pl_rate=pl,
    )


def photocurrent_model(power: float, params: PowerCurveParams) -> float:
    """Closed-form NV photocurrent (A) versus optical power (W)."""
    if power < 0:
        raise PhotodynamicsError(f"optical power must be >= 0, got {power}")
    return (power ** 2 / (params.alpha * params.beta)) / (1.0 + power / params.alpha)


def nv_current(result: SteadyStateResult) -> float:
    """Collected NV photocurrent (A) for a steady-state solve."""
    return E_CHARGE * result.photocurrent_flux


def background_current(params: PhotophysicsParams, power: float) -> float:
    """MW-independent photocurrent from non-NV impurities (A)."""
    return params.background_current_coeff * power ** 2


def pdmr_contrast(
    params: PhotophysicsParams,
    power: float,
    mw: MWDrive,
    transitions: TransitionSet,
    mix_gs: MixingMatrix = None,
    mix_es: MixingMatrix = None,
    es_transitions: TransitionSet = None,
    include_background: bool = True,
) -> float:
    """Relative photocurrent dip (I_off - I_on) / I_off at the MW setting."""
    if power == 0.0:
        raise PhotodynamicsError("no photocurrent to contrast against (I_off = 0)")
    if not mw.on:
        mw = replace(mw, on=True)
    on = solve_cw(params, power, mw, transitions, mix_gs, mix_es, es_transitions)
    off = solve_cw(params, power, replace(mw, on=False), transitions,
                   mix_gs, mix_es, es_transitions)
    bg = background_current(params, power) if include_background else 0.0
    i_off = nv_current(off) + bg
    i_on = nv_current(on) + bg
    if i_off == 0.0:
        raise PhotodynamicsError("no photocurrent to contrast against (I_off = 0)")
    return (i_off - i_on) / i_off
