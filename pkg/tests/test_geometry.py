import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdmrsim.geometry import (GeometryError, MagneticField, NVFamily, UnitVector,
                              direction_from_miller, family_angles, nv_axes,
                              nv_families, project_field)

TETRA_ANGLE = np.arccos(-1.0 / 3.0)


def rotation_from(a, b, c, d):
    """Rotation matrix from a (non-unit) quaternion."""
    q = np.array([a, b, c, d])
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


unit_components = st.floats(-1.0, 1.0).filter(lambda v: abs(v) > 1e-3)


def unit_vectors():
    return st.tuples(unit_components, unit_components, unit_components).map(
        lambda t: UnitVector.from_array(t)
    )


class TestNVAxes:
    def test_axes_are_the_body_diagonals(self):
        expected = {(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)}
        got = {tuple(np.sign(ax.array).astype(int)) for ax in nv_axes()}
        assert got == expected

    def test_axes_normalized(self):
        for ax in nv_axes():
            assert np.linalg.norm(ax.array) == pytest.approx(1.0, abs=1e-12)

    def test_pairwise_tetrahedral_angle(self):
        axes = nv_axes()
        for i in range(4):
            for j in range(i + 1, 4):
                cos = float(np.dot(axes[i].array, axes[j].array))
                assert np.arccos(cos) == pytest.approx(TETRA_ANGLE, abs=1e-12)

    def test_family_indices_stable(self):
        fams = nv_families()
        assert [f.index for f in fams] == [0, 1, 2, 3]
        assert np.allclose(fams[0].axis.array, np.ones(3) / np.sqrt(3))


class TestMiller:
    def test_100(self):
        v = direction_from_miller(1, 0, 0)
        assert np.allclose(v.array, [1, 0, 0])

    def test_111(self):
        v = direction_from_miller(1, 1, 1)
        assert np.allclose(v.array, np.ones(3) / np.sqrt(3))

    def test_zero_rejected(self):
        with pytest.raises(GeometryError):
            direction_from_miller(0, 0, 0)

    def test_negative_indices(self):
        v = direction_from_miller(1, -1, 0)
        assert np.allclose(v.array, [1, -1, 0] / np.sqrt(2))


class TestProjectField:
    def test_aligned(self):
        fam = nv_families()[0]
        field = MagneticField(10e-3, UnitVector.from_array([1, 1, 1]))
        proj = project_field(field, fam)
        assert proj.b_par == pytest.approx(10e-3, rel=1e-12)
        assert proj.b_perp == pytest.approx(0.0, abs=1e-9)
        assert proj.tilt == pytest.approx(0.0, abs=1e-6)

    def test_100_tilt_is_arccos_inv_sqrt3(self):
        # the paper-rounded 54.5 deg is used as arccos(1/sqrt(3)) = 54.7356 deg
        field = MagneticField(10e-3, UnitVector(1.0, 0.0, 0.0))
        for fam in nv_families():
            proj = project_field(field, fam)
            assert np.degrees(proj.tilt) == pytest.approx(54.7356, abs=1e-3)
            assert proj.b_par == pytest.approx(10e-3 / np.sqrt(3), rel=1e-9)

    def test_111_tilted_family(self):
        field = MagneticField(10e-3, UnitVector.from_array([1, 1, 1]))
        fam = next(f for f in nv_families()
                   if np.allclose(np.sign(f.axis.array), [1, -1, -1]))
        proj = project_field(field, fam)
        assert np.degrees(proj.tilt) == pytest.approx(np.degrees(np.arccos(1 / 3)),
                                                      abs=1e-9)

    def test_zero_field(self):
        proj = project_field(MagneticField(0.0, UnitVector(0.0, 0.0, 1.0)),
                             nv_families()[0])
        assert proj.b_par == 0.0 and proj.b_perp == 0.0

    def test_negative_magnitude_rejected(self):
        with pytest.raises(GeometryError):
            MagneticField(-1e-3, UnitVector(1.0, 0.0, 0.0))


class TestFamilyAngles:
    def test_100_all_identical(self):
        angles = family_angles(UnitVector(1.0, 0.0, 0.0))
        assert np.allclose(np.degrees(angles), 54.7356, atol=1e-3)

    def test_111_one_longitudinal_three_tilted(self):
        angles = np.degrees(np.sort(family_angles(direction_from_miller(1, 1, 1))))
        assert angles[0] == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(angles[1:], np.degrees(np.arccos(1 / 3)), atol=1e-9)

    def test_110_two_pairs(self):
        angles = np.degrees(np.sort(family_angles(direction_from_miller(1, 1, 0))))
        assert np.allclose(angles[:2], 35.2644, atol=1e-3)
        assert np.allclose(angles[2:], 90.0, atol=1e-9)


class TestInvariants:
    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(unit_vectors(), st.floats(1e-4, 0.2),
           st.tuples(unit_components, unit_components, unit_components,
                     unit_components))
    def test_rotational_covariance(self, direction, mag, quat):
        rot = rotation_from(*quat)
        field = MagneticField(mag, direction)
        rotated = MagneticField(mag, UnitVector.from_array(rot @ direction.array))
        for fam in nv_families():
            fam_rot = NVFamily(fam.index,
                               UnitVector.from_array(rot @ fam.axis.array))
            a = project_field(field, fam)
            b = project_field(rotated, fam_rot)
            assert a.b_par == pytest.approx(b.b_par, abs=1e-12 + 1e-10 * mag)
            assert a.b_perp == pytest.approx(b.b_perp, abs=1e-12 + 1e-10 * mag)

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(unit_vectors(), st.floats(1e-4, 0.2))
    def test_fold_symmetry(self, direction, mag):
        flipped = UnitVector.from_array(-direction.array)
        for fam in nv_families():
            a = project_field(MagneticField(mag, direction), fam)
            b = project_field(MagneticField(mag, flipped), fam)
            assert a.b_par == pytest.approx(b.b_par, rel=1e-12)
            assert a.b_perp == pytest.approx(b.b_perp, rel=1e-12)

    @settings(max_examples=100, deadline=None, derandomize=True)
    @given(unit_vectors())
    def test_cos_squared_sum_rule(self, direction):
        # brute-force property of the tetrahedral axis set
        total = float(np.sum(np.cos(family_angles(direction)) ** 2))
        assert total == pytest.approx(4.0 / 3.0, abs=1e-10)

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(unit_vectors(), st.floats(1e-4, 0.2))
    def test_pythagoras(self, direction, mag):
        for fam in nv_families():
            proj = project_field(MagneticField(mag, direction), fam)
            assert proj.b_par ** 2 + proj.b_perp ** 2 == pytest.approx(
                mag ** 2, rel=1e-12)
