"""Diamond crystal frame, NV orientation families and field projections.

The four NV symmetry axes are the <111> body diagonals of the cubic cell.
The sign convention for each axis is fixed (see NV_AXES) so that family
indices are stable across runs. Projections fold the field onto [0, pi/2]:
b_par is stored unsigned because the resonance spectrum |D +- gamma*B_par|
is invariant under B -> -B.
"""

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


@dataclass(frozen=True)
class UnitVector:
    """Direction cosines with |v| = 1 (enforced to 1e-12)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm2 - 1.0) > 1e-12:
            raise GeometryError(f"direction cosines not normalized: |v|^2 = {norm2!r}")

    @classmethod
    def from_array(cls, v) -> "UnitVector":
        """Normalize an arbitrary 3-vector. Rejects the zero vector."""
        v = np.asarray(v, dtype=float)
        if v.shape != (3,):
            raise GeometryError(f"expected a 3-vector, got shape {v.shape}")
        n = float(np.linalg.norm(v))
        if n == 0.0 or not np.isfinite(n):
            raise GeometryError("cannot normalize a zero or non-finite vector")
        v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class MagneticField:
    """Static applied field: magnitude (T) >= 0 plus a unit direction."""

    magnitude: float
    direction: UnitVector

    def __post_init__(self):
        if self.magnitude < 0:
            raise GeometryError(f"field magnitude must be >= 0, got {self.magnitude}")

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction.array


@dataclass(frozen=True)
class NVFamily:
    """One of the four N-to-V orientation families."""

    index: int
    axis: UnitVector


@dataclass(frozen=True)
class FieldProjection:
    """Field decomposed along one NV axis.

    b_par/b_perp in tesla, tilt in radians folded into [0, pi/2];
    b_par^2 + b_perp^2 equals the squared field magnitude.
    """

    b_par: float
    b_perp: float
    tilt: float


# Fixed axis-sign convention: even number of minus signs.
_AXES_RAW = np.array(
    [[1.0, 1.0, 1.0],
     [1.0, -1.0, -1.0],
     [-1.0, 1.0, -1.0],
     [-1.0, -1.0, 1.0]]
) / np.sqrt(3.0)


def nv_axes() -> tuple[UnitVector, UnitVector, UnitVector, UnitVector]:
    """The four tetrahedral <111> NV axes, normalized, in fixed order."""
    return tuple(UnitVector.from_array(a) for a in _AXES_RAW)


def nv_families() -> tuple[NVFamily, NVFamily, NVFamily, NVFamily]:
    """The four orientation families with stable indices 0..3."""
    return tuple(NVFamily(i, ax) for i, ax in enumerate(nv_axes()))


def direction_from_miller(h: int, k: int, l: int) -> UnitVector:
    """Normalized direction for Miller indices <hkl>. (0,0,0) is rejected."""
    if h == 0 and k == 0 and l == 0:
        raise GeometryError("Miller indices (0,0,0) do not define a direction")
    return UnitVector.from_array([float(h), float(k), float(l)])


def project_field(field: MagneticField, family: NVFamily) -> FieldProjection:
    """Split a field into components parallel/transverse to a family axis.

    b_par = |B . u| (sign absorbed), b_perp = sqrt(B^2 - b_par^2), and
    tilt = angle(B, u) folded into [0, pi/2]. For zero magnitude the tilt
    is defined as 0.
    """
    b = field.magnitude
    cos_t = abs(float(np.dot(field.direction.array, family.axis.array)))
    cos_t = min(cos_t, 1.0)
    b_par = b * cos_t
    b_perp = float(np.sqrt(max(b * b - b_par * b_par, 0.0)))
    tilt = float(np.arccos(cos_t))
    return FieldProjection(b_par=b_par, b_perp=b_perp, tilt=tilt)


def family_angles(direction: UnitVector) -> np.ndarray:
    """Tilt angle (radians, folded into [0, pi/2]) of each family axis."""
    cos_t = np.abs(_AXES_RAW @ direction.array)
    return np.arccos(np.clip(cos_t, 0.0, 1.0))
