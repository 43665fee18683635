import math

import numpy as np
import pytest

from coposim.errors import DegenerateGeometryError
from coposim.geometry import (Point3, ReflectionSurface, Scene, directed_angle_xz,
                              mirror_point, path_length, path_length_matrix, specular_point)


def random_surface(rng) -> ReflectionSurface:
    if rng.random() < 0.2:
        return ReflectionSurface.vertical_x(rng.uniform(-10, 10))
    return ReflectionSurface(slope=rng.uniform(-4, 4), intercept=rng.uniform(-10, 10))


class TestMirrorPoint:
    def test_horizontal_surface_flips_z(self):
        s = ReflectionSurface(slope=0.0, intercept=3.0)
        assert np.allclose(mirror_point(s, [1.0, 0.0, 0.0]), [1.0, 0.0, 6.0])

    def test_point_on_surface_is_fixed(self):
        s = ReflectionSurface(slope=2.0, intercept=-1.0)
        p = np.array([1.5, 0.7, 2.0 * 1.5 - 1.0])
        assert np.allclose(mirror_point(s, p), p, atol=1e-12)

    def test_tilted_surface_hand_example(self):
        # Reflection of (1, 0, 6) across z = x + 10: signed distance to the line
        # is -5/sqrt(2) along normal (-1, 1)/sqrt(2), so the image is (-4, 0, 11).
        s = ReflectionSurface(slope=1.0, intercept=10.0)
        assert np.allclose(mirror_point(s, [1.0, 0.0, 6.0]), [-4.0, 0.0, 11.0], atol=1e-12)

    def test_involution_and_midpoint(self, rng):
        for _ in range(200):
            s = random_surface(rng)
            p = rng.uniform(-20, 20, size=3)
            q = mirror_point(s, p)
            assert np.allclose(mirror_point(s, q), p, atol=1e-12)
            assert q[1] == p[1]
            mid = 0.5 * (p + q)
            nx, nz, d = s.normal_form()
            assert abs(mid[0] * nx + mid[2] * nz - d) < 1e-12

    def test_vectorized_matches_scalar(self, rng):
        s = ReflectionSurface(slope=-0.7, intercept=2.2)
        pts = rng.uniform(-5, 5, size=(10, 3))
        batch = mirror_point(s, pts)
        for i in range(len(pts)):
            assert np.allclose(batch[i], mirror_point(s, pts[i]))


class TestPathLength:
    def test_los_zero_and_direct(self):
        assert path_length(None, [0, 0, 8], [0, 0, 8]) == 0.0
        assert path_length(None, [0, 0, 8], [0, 0, 0]) == pytest.approx(8.0)

    def test_reflected_hand_example(self):
        s = ReflectionSurface(slope=0.0, intercept=3.0)
        assert path_length(s, [1, 0, 0], [0, 0, 0]) == pytest.approx(math.sqrt(37.0))

    def test_reflected_equals_two_segments(self, rng):
        # The mirror construction must equal tx -> specular point -> rx.
        for _ in range(100):
            s = random_surface(rng)
            tx = rng.uniform(-8, 8, size=3)
            rx = rng.uniform(-8, 8, size=3)
            try:
                sp = specular_point(s, tx, rx)
            except DegenerateGeometryError:
                continue
            two_leg = np.linalg.norm(tx - sp) + np.linalg.norm(sp - rx)
            # Same-side endpoints make the specular point a true bounce.
            nx, nz, d = s.normal_form()
            same_side = (tx[0] * nx + tx[2] * nz - d) * (rx[0] * nx + rx[2] * nz - d) > 0
            if same_side:
                assert path_length(s, tx, rx) == pytest.approx(two_leg, abs=1e-9)

    def test_reflected_at_least_direct_same_side(self, rng):
        for _ in range(100):
            s = random_surface(rng)
            tx = rng.uniform(-8, 8, size=3)
            rx = rng.uniform(-8, 8, size=3)
            nx, nz, d = s.normal_form()
            if (tx[0] * nx + tx[2] * nz - d) * (rx[0] * nx + rx[2] * nz - d) > 0:
                assert path_length(s, tx, rx) >= np.linalg.norm(tx - rx) - 1e-12

    def test_matrix_matches_scalar(self, rng):
        s = ReflectionSurface(slope=1.3, intercept=4.0)
        tx = rng.uniform(-5, 5, size=(4, 3))
        rx = rng.uniform(-5, 5, size=(6, 3))
        mat = path_length_matrix(s, tx, rx)
        assert mat.shape == (4, 6)
        assert mat[2, 3] == pytest.approx(path_length(s, tx[2], rx[3]))


class TestDirectedAngle:
    def test_axis_cases(self):
        assert directed_angle_xz([0, 0, 0], [1, 0, 0]) == pytest.approx(0.0)
        assert directed_angle_xz([0, 0, 0], [0, 0, 1]) == pytest.approx(math.pi / 2)

    def test_hand_example(self):
        assert directed_angle_xz([-4, 0, 11], [1, 0, 6]) == pytest.approx(-math.pi / 4)

    def test_antisymmetry_mod_2pi(self, rng):
        for _ in range(100):
            p, q = rng.uniform(-5, 5, size=(2, 3))
            a = directed_angle_xz(p, q)
            b = directed_angle_xz(q, p)
            assert math.isclose(math.cos(a - b), -1.0, abs_tol=1e-12)

    def test_range_is_half_open(self):
        assert directed_angle_xz([0, 0, 0], [-1, 0, 0]) == pytest.approx(math.pi)

    def test_degenerate_projection_raises(self):
        with pytest.raises(DegenerateGeometryError):
            directed_angle_xz([1, 0, 2], [1, 5, 2])


class TestSceneAndPoint:
    def test_point_roundtrip(self):
        p = Point3(1.0, -2.0, 3.5)
        assert Point3.from_array(p.as_array()) == p

    def test_point_rejects_nan(self):
        with pytest.raises(ValueError):
            Point3(float("nan"), 0.0, 0.0)

    def test_scene_validations(self):
        tv = np.array([[0, 0, 8], [1, 0, 8]], dtype=float)
        sv = np.array([[0, 0, 0], [1, 0, 0]], dtype=float)
        scene = Scene(tv, (0, 1), sv, (), 1e-9, True)
        assert scene.n_tv == 2 and scene.n_sv == 2
        with pytest.raises(ValueError):
            Scene(tv[:1], (0, 1), sv, (), 0.0, True)
        with pytest.raises(ValueError):
            Scene(np.vstack([tv, tv[:1]]), (0, 1), sv, (), 0.0, True)
        with pytest.raises(ValueError):
            Scene(tv, (0, 0), sv, (), 0.0, True)

    def test_path_enumeration(self):
        tv = np.array([[0, 0, 8], [1, 0, 8]], dtype=float)
        sv = np.array([[0, 0, 0], [1, 0, 0]], dtype=float)
        s = ReflectionSurface(slope=1.0, intercept=3.0)
        scene = Scene(tv, (0, 1), sv, (s,), 0.0, True)
        assert [p for p, _ in scene.path_surfaces()] == [0, 1]
        hidden = Scene(tv, (0, 1), sv, (s,), 0.0, False)
        assert [p for p, _ in hidden.path_surfaces()] == [1]
