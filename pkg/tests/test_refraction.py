"""Refraction tests against a scalar Snell's-law oracle.

The oracle works per ray in plain Python floats: decompose the incident ray
against the normal, apply sin(theta2) = (n1/n2) sin(theta1) in the plane of
incidence, and rebuild the transmitted direction.  It shares no code with the
vectorized implementation.
"""

import numpy as np
import pytest

from wavebench import rng
from wavebench.errors import InputError, ParameterError
from wavebench.refraction import (
    VIEW_RAY,
    DisplacementField,
    RefractionParams,
    blend_normals,
    displacement_field,
    refract,
)


def snell_oracle(v1, normal, ratio):
    """One-ray reference: returns (v2, tir) via the angle form of Snell's law."""
    v1 = np.asarray(v1, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    if float(np.dot(n, v1)) > 0.0:
        n = -n
    cos1 = -float(np.dot(n, v1))
    tangent = v1 + n * cos1
    sin1 = float(np.linalg.norm(tangent))
    sin2 = ratio * sin1
    if sin2 > 1.0:
        return None, True
    t_hat = tangent / sin1 if sin1 > 0.0 else tangent
    cos2 = np.sqrt(1.0 - sin2 * sin2)
    return sin2 * t_hat - cos2 * n, False


def random_unit_vectors(generator, count, upward=False):
    v = generator.normal(size=(count, 3))
    if upward:
        v[:, 2] = np.abs(v[:, 2]) + 0.05
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


class TestRefractAgainstOracle:
    def test_ten_thousand_random_rays(self):
        g = rng.stream(17, "test", "snell")
        count = 10_000
        rays = random_unit_vectors(g, count)
        normals = random_unit_vectors(g, count, upward=True)
        ratio = 1.33
        v2, tir = refract(rays, normals, ratio)
        worst = 0.0
        for i in range(count):
            ref, ref_tir = snell_oracle(rays[i], normals[i], ratio)
            assert bool(tir[i]) == ref_tir
            if not ref_tir:
                worst = max(worst, float(np.max(np.abs(v2[i] - ref))))
        assert worst < 1e-9

    def test_transmitted_rays_are_unit(self):
        g = rng.stream(18, "test", "unit")
        rays = random_unit_vectors(g, 500)
        normals = random_unit_vectors(g, 500, upward=True)
        v2, tir = refract(rays, normals, 1.33)
        norms = np.linalg.norm(v2[~tir], axis=-1)
        assert np.allclose(norms, 1.0, atol=1e-12)

    def test_tangential_momentum_invariant(self):
        # n1 (v1 x N) = n2 (v2 x N): the component of n*v along the surface
        # is conserved across the interface
        g = rng.stream(19, "test", "tangential")
        rays = random_unit_vectors(g, 2000)
        normals = random_unit_vectors(g, 2000, upward=True)
        n1, n2 = 1.33, 1.0
        v2, tir = refract(rays, normals, n1 / n2)
        cross1 = np.cross(rays, normals)
        cross2 = np.cross(v2, normals)
        residual = np.linalg.norm(n1 * cross1 - n2 * cross2, axis=-1)
        assert np.max(residual[~tir]) < 1e-9

    def test_normal_incidence_passes_straight(self):
        v2, tir = refract(VIEW_RAY, np.array([0.0, 0.0, 1.0]), 1.33)
        assert not tir
        assert np.allclose(v2, VIEW_RAY, atol=1e-15)

    def test_normal_orientation_is_fixed_internally(self):
        g = rng.stream(20, "test", "orient")
        rays = random_unit_vectors(g, 100)
        normals = random_unit_vectors(g, 100, upward=True)
        a, tir_a = refract(rays, normals, 1.33)
        b, tir_b = refract(rays, -normals, 1.33)
        assert np.array_equal(tir_a, tir_b)
        assert np.allclose(a, b, atol=1e-15)

    def test_total_internal_reflection_is_finite_and_flagged(self):
        # ratio 1.33 has critical angle ~48.8 deg; pick a 60 deg incidence
        s, c = np.sin(np.radians(60)), np.cos(np.radians(60))
        v1 = np.array([s, 0.0, c])
        v2, tir = refract(v1, np.array([0.0, 0.0, 1.0]), 1.33)
        assert bool(tir)
        assert np.all(np.isfinite(v2))

    def test_matched_indices_are_identity(self):
        g = rng.stream(21, "test", "matched")
        rays = random_unit_vectors(g, 200)
        normals = random_unit_vectors(g, 200, upward=True)
        v2, tir = refract(rays, normals, 1.0)
        assert not np.any(tir)
        assert np.allclose(v2, rays, atol=1e-12)

    def test_input_validation(self):
        with pytest.raises(InputError):
            refract(np.zeros(2), np.zeros((4, 3)), 1.33)
        with pytest.raises(ParameterError):
            refract(VIEW_RAY, np.array([0.0, 0.0, 1.0]), 0.0)


class TestBlendNormals:
    def test_alpha_zero_is_exactly_flat(self):
        g = rng.stream(22, "test", "blend")
        normals = random_unit_vectors(g, 50).reshape(5, 10, 3)
        flat = blend_normals(normals, 0.0)
        assert np.all(flat[..., :2] == 0.0)
        assert np.all(flat[..., 2] == 1.0)

    def test_alpha_one_is_identity(self):
        g = rng.stream(23, "test", "blend1")
        normals = random_unit_vectors(g, 50)
        assert np.array_equal(blend_normals(normals, 1.0), normals)

    def test_intermediate_alpha_is_unit_and_between(self):
        n = np.array([[0.3, -0.2, 0.9327379053088816]])
        n /= np.linalg.norm(n)
        mid = blend_normals(n, 0.4)
        assert np.linalg.norm(mid) == pytest.approx(1.0, abs=1e-12)
        # transverse part shrinks monotonically with alpha
        for lo, hi in ((0.1, 0.3), (0.3, 0.7), (0.7, 1.0)):
            t_lo = np.hypot(*blend_normals(n, lo)[0, :2])
            t_hi = np.hypot(*blend_normals(n, hi)[0, :2])
            assert t_lo < t_hi

    def test_preserves_float32(self):
        n = np.zeros((4, 3), dtype=np.float32)
        n[:, 2] = 1.0
        assert blend_normals(n, 0.5).dtype == np.float32

    def test_alpha_domain(self):
        with pytest.raises(ParameterError):
            blend_normals(np.array([0.0, 0.0, 1.0]), 1.5)


class TestDisplacementField:
    def tilted_normals(self, slope_x=0.1, slope_y=0.0, shape=(4, 4)):
        n = np.empty(shape + (3,))
        n[..., 0] = -slope_x
        n[..., 1] = -slope_y
        n[..., 2] = 1.0
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        return n

    def test_matches_refract_everywhere(self):
        # the closed form inside displacement_field must agree with the
        # general routine for the straight-down view ray
        g = rng.stream(24, "test", "closed-form")
        normals = random_unit_vectors(g, 4096, upward=True).reshape(64, 64, 3)
        params = RefractionParams()
        field = displacement_field(normals, params)
        v2, tir = refract(VIEW_RAY, normals, params.ratio)
        assert np.array_equal(field.tir, tir)
        ok = ~tir & (v2[..., 2] > 0.0)
        slope = v2[..., :2] / v2[..., 2:3]
        mag = np.linalg.norm(slope, axis=-1)
        ok &= mag <= params.max_slope
        expected = slope * params.distance
        assert np.max(np.abs(field.offsets[ok] - expected[ok])) < 1e-12

    def test_flat_surface_no_displacement(self):
        n = self.tilted_normals(0.0, 0.0)
        field = displacement_field(n, RefractionParams())
        assert np.all(field.offsets == 0.0)
        assert not np.any(field.tir)

    def test_alpha_zero_kills_displacement(self):
        n = self.tilted_normals(0.3, -0.2)
        field = displacement_field(n, RefractionParams(alpha=0.0))
        assert np.all(field.offsets == 0.0)

    def test_distance_scale_is_linear(self):
        n = self.tilted_normals(0.12, 0.05)
        base = displacement_field(n, RefractionParams(distance_scale=1.0))
        doubled = displacement_field(n, RefractionParams(distance_scale=2.0))
        assert np.allclose(doubled.offsets, 2.0 * base.offsets, atol=1e-15)

    def test_rotating_surface_rotates_displacement(self):
        # 90 deg rotation of the normal field rotates offsets the same way
        g = rng.stream(25, "test", "rot")
        normals = random_unit_vectors(g, 256, upward=True).reshape(16, 16, 3)
        params = RefractionParams()
        field = displacement_field(normals, params)
        rotated = np.rot90(normals, k=1, axes=(0, 1)).copy()
        # rotating the grid also rotates each vector's transverse components:
        # (x, y) -> (y, -x) matches rot90's row/col exchange
        rotated = np.stack(
            [rotated[..., 1], -rotated[..., 0], rotated[..., 2]], axis=-1
        )
        field_rot = displacement_field(rotated, params)
        expected = np.rot90(field.offsets, k=1, axes=(0, 1))
        expected = np.stack([expected[..., 1], -expected[..., 0]], axis=-1)
        assert np.allclose(field_rot.offsets, expected, atol=1e-12)

    def test_larger_alpha_larger_displacement(self):
        n = self.tilted_normals(0.2, 0.1)
        mags = []
        for alpha in (0.2, 0.5, 0.8, 1.0):
            f = displacement_field(n, RefractionParams(alpha=alpha))
            mags.append(float(np.linalg.norm(f.offsets[0, 0])))
        assert all(a < b for a, b in zip(mags, mags[1:]))

    def test_offsets_capped_at_max_slope(self):
        # steep surface drives rays past critical angle; offsets must stay
        # bounded by max_slope * distance and be finite everywhere
        steep = self.tilted_normals(3.0, 0.0)
        params = RefractionParams(max_slope=4.0)
        field = displacement_field(steep, params)
        assert np.any(field.tir)
        assert np.all(np.isfinite(field.offsets))
        mags = np.linalg.norm(field.offsets, axis=-1)
        assert np.all(mags <= params.max_slope * params.distance + 1e-12)

    def test_tilt_toward_positive_x_shifts_sample(self):
        # water tilted so the surface rises toward +x bends the ray; the
        # sample point must move along x only, with the documented sign
        field = displacement_field(self.tilted_normals(0.1, 0.0), RefractionParams())
        dx = field.offsets[0, 0, 0]
        dy = field.offsets[0, 0, 1]
        assert dy == pytest.approx(0.0, abs=1e-15)
        assert dx != 0.0
        # slope through a denser medium bends the ray toward the normal's tilt
        v2, _ = refract(VIEW_RAY, self.tilted_normals(0.1, 0.0)[0, 0], 1.33)
        assert np.sign(dx) == np.sign(v2[0] / v2[2])

    def test_float32_pipeline(self):
        n = self.tilted_normals(0.05, 0.02).astype(np.float32)
        field = displacement_field(n, RefractionParams())
        assert field.offsets.dtype == np.float32

    def test_param_validation(self):
        with pytest.raises(ParameterError):
            RefractionParams(alpha=-0.1)
        with pytest.raises(ParameterError):
            RefractionParams(distance=0.0)
        with pytest.raises(ParameterError):
            RefractionParams(max_slope=-1.0)

    def test_dataclass_fields(self):
        f = DisplacementField(offsets=np.zeros((2, 2, 2)), tir=np.zeros((2, 2), bool))
        assert f.offsets.shape[-1] == 2
