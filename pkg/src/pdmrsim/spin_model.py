"""Spin-1 Hamiltonians of the NV- triplets and their exact eigensolutions.

The Hamiltonian (in Hz) is H = D*Sz^2 + gamma*(B_par*Sz + B_perp*Sx) in the
m_s = {-1, 0, +1} basis. The transverse component is placed along Sx without
loss of generality: the spectrum depends only on |B_perp|. With B_perp = 0
the transition frequencies reduce to the closed form |D +- gamma*B_par|;
the general case is handled by exact 3x3 diagonalization, with eigenstates
labeled by their dominant m_s character (50/50 ties broken by energy order).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import D_GS, GAMMA_E, SPIN1_SX, SPIN1_SZ, SPIN1_SZ2
from .geometry import FieldProjection

ZERO_FIELD = FieldProjection(b_par=0.0, b_perp=0.0, tilt=0.0)


class SpinModelError(ValueError):
    """Raised for invalid spin-model input."""


@dataclass(frozen=True)
class SpinSystem:
    """Zero-field splitting, gyromagnetic ratio and the projected field."""

    d_split: float = D_GS            # Hz
    gamma: float = GAMMA_E           # Hz/T
    projection: FieldProjection = field(default_factory=lambda: ZERO_FIELD)

    def __post_init__(self):
        if self.d_split <= 0:
            raise SpinModelError(f"d_split must be > 0, got {self.d_split}")
        if self.gamma <= 0:
            raise SpinModelError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class EigenSystem:
    """Sorted eigenlevels (Hz) and orthonormal eigenvector columns."""

    levels: np.ndarray   # (3,), ascending
    states: np.ndarray   # (3,3), states[:, i] belongs to levels[i]


@dataclass(frozen=True)
class TransitionSet:
    """The two m_s = 0 <-> +-1-like transition frequencies, Hz."""

    f_minus: float
    f_plus: float
    manifold: str = "ground"   # "ground" or "excited"


@dataclass(frozen=True)
class MixingMatrix:
    """probs[i, j] = |<eigenstate_i | m_s=j>|^2, rows in (-1, 0, +1) label order.

    Row i is the eigenstate whose dominant character is m_s = (-1, 0, +1)[i];
    columns follow the same m_s order. Doubly stochastic by unitarity, and a
    permutation-free identity when the transverse field vanishes.
    """

    probs: np.ndarray    # (3,3)
    levels: np.ndarray   # (3,), level of the eigenstate in row i


def hamiltonian(sys: SpinSystem) -> np.ndarray:
    """3x3 spin-1 Hamiltonian (Hz) for the given projected field."""
    p = sys.projection
    return (
        sys.d_split * SPIN1_SZ2
        + sys.gamma * p.b_par * SPIN1_SZ
        + sys.gamma * p.b_perp * SPIN1_SX
    )


def eigensystem(h: np.ndarray) -> EigenSystem:
    """Exact eigensolution of a Hermitian 3x3 matrix, levels ascending."""
    h = np.asarray(h)
    if h.shape != (3, 3):
        raise SpinModelError(f"expected a 3x3 matrix, got shape {h.shape}")
    if not np.allclose(h, h.conj().T, rtol=0.0, atol=1e-6 * max(np.abs(h).max(), 1.0)):
        raise SpinModelError("matrix is not Hermitian")
    levels, states = np.linalg.eigh(h)
    return EigenSystem(levels=levels, states=states)


def zeeman_aligned(sys: SpinSystem, manifold: str = "ground") -> TransitionSet:
    """Closed-form transitions |D +- gamma*B_par| for an axial field."""
    if abs(sys.projection.b_perp) > 1e-15:
        raise SpinModelError(
            f"zeeman_aligned requires b_perp = 0, got {sys.projection.b_perp}"
        )
    zeeman = sys.gamma * sys.projection.b_par
    return TransitionSet(
        f_minus=abs(sys.d_split - zeeman),
        f_plus=abs(sys.d_split + zeeman),
        manifold=manifold,
    )


def _character_assignment(states: np.ndarray) -> np.ndarray:
    """Assign each m_s label to a distinct eigenstate by dominant weight.

    Returns perm with perm[j] = eigenstate index carrying character m_s index
    j. Uses maximal total overlap so the labeling stays bijective through
    anticrossings; exact ties resolve toward ascending energy order.
    """
    probs = np.abs(states) ** 2   # [ms, eig]
    # small bias toward the identity pairing breaks exact 50/50 ties
    bias = 1e-12 * np.eye(3)
    rows, cols = linear_sum_assignment(-(probs + bias))
    perm = np.empty(3, dtype=int)
    perm[rows] = cols
    return perm


def mixing_matrix(sys: SpinSystem) -> MixingMatrix:
    """|<eigenstate|m_s>|^2 table in (-1, 0, +1) label order."""
    eig = eigensystem(hamiltonian(sys))
    probs = np.abs(eig.states) ** 2          # [ms, eig]
    perm = _character_assignment(eig.states)
    ordered = probs[:, perm].T               # row i: eigenstate labeled ms_i
    return MixingMatrix(probs=ordered, levels=eig.levels[perm])


def transition_frequencies(sys: SpinSystem, manifold: str = "ground") -> TransitionSet:
    """Transitions from the m_s=0-like level via exact diagonalization."""
    mix = mixing_matrix(sys)
    e_minus, e_zero, e_plus = mix.levels
    return TransitionSet(
        f_minus=abs(e_minus - e_zero),
        f_plus=abs(e_plus - e_zero),
        manifold=manifold,
    )


def lac_fields(d_gs: float = D_GS, d_es: float = None, gamma: float = GAMMA_E):
    """Ground- and excited-state anticrossing fields (d/gamma), tesla."""
    from .constants import D_ES

    if d_es is None:
        d_es = D_ES
    if d_gs <= 0 or d_es <= 0 or gamma <= 0:
        raise SpinModelError("lac_fields requires positive inputs")
    return d_gs / gamma, d_es / gamma
