import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import InvalidDimensionError, SingularityError, DomainError
from apps.geometry.services.ball import BallDomain, unit_ball_volume, l0
from apps.geometry.services.green import (
    GreenKernel,
    green_eval,
    green_matrix,
    kernel_upper_bound,
    normalization,
)


def random_ball_points(rng, domain, count, shrink=0.999):
    directions = rng.standard_normal((count, domain.dim))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    radii = shrink * domain.radius * rng.random(count) ** (1.0 / domain.dim)
    return domain.center_array + directions * radii[:, None]


class UnitBallVolumeTests(SimpleTestCase):

    def test_three_ball(self):
        self.assertAlmostEqual(unit_ball_volume(3), 4 * math.pi / 3, places=12)

    def test_four_ball(self):
        self.assertAlmostEqual(unit_ball_volume(4), math.pi ** 2 / 2, places=12)

    def test_sphere_area_identity(self):
        self.assertAlmostEqual(3 * unit_ball_volume(3), 4 * math.pi, places=12)

    def test_rejects_nonpositive_dimension(self):
        with self.assertRaises(InvalidDimensionError):
            unit_ball_volume(0)


class BallDomainTests(SimpleTestCase):

    def test_l0_values(self):
        self.assertAlmostEqual(l0(BallDomain.unit(3, 1.0)), 2.0)
        self.assertAlmostEqual(l0(BallDomain.unit(4, 1.0)), 1.0)
        self.assertAlmostEqual(l0(BallDomain.unit(3, 0.5)), 0.5)

    def test_diameter(self):
        self.assertEqual(BallDomain.unit(3, 1.5).diameter, 3.0)

    def test_dimension_two_rejected(self):
        with self.assertRaises(InvalidDimensionError):
            BallDomain(dim=2, center=(0.0, 0.0), radius=1.0)

    def test_center_length_must_match(self):
        with self.assertRaises(InvalidDimensionError):
            BallDomain(dim=3, center=(0.0, 0.0), radius=1.0)

    def test_radius_positive(self):
        with self.assertRaises(DomainError):
            BallDomain(dim=3, center=(0.0, 0.0, 0.0), radius=0.0)


class GreenKernelTests(SimpleTestCase):

    def setUp(self):
        self.domain = BallDomain.unit(3, 1.0)
        self.kernel = GreenKernel(self.domain)

    def test_image_formula_value(self):
        value = green_eval(self.kernel, [0.0, 0.0, 0.0], [0.5, 0.0, 0.0])
        self.assertAlmostEqual(value, 1 / (4 * math.pi), places=12)

    def test_center_limit(self):
        x = np.array([0.3, -0.2, 0.1])
        expected = normalization(3) * (1 / np.linalg.norm(x) - 1.0)
        self.assertAlmostEqual(green_eval(self.kernel, x, [0.0, 0.0, 0.0]), expected, places=12)

    def test_vanishes_on_boundary(self):
        value = green_eval(self.kernel, [0.1, 0.2, 0.0], [0.0, 0.0, 1.0])
        self.assertAlmostEqual(value, 0.0, places=12)

    def test_coincident_points_are_singular(self):
        with self.assertRaises(SingularityError):
            green_eval(self.kernel, [0.1, 0.1, 0.1], [0.1, 0.1, 0.1])

    def test_points_outside_rejected(self):
        with self.assertRaises(DomainError):
            green_eval(self.kernel, [0.0, 0.0, 0.0], [1.5, 0.0, 0.0])

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        xs = random_ball_points(rng, self.domain, 100)
        ys = random_ball_points(rng, self.domain, 100)
        for x, y in zip(xs, ys):
            forward = green_eval(self.kernel, x, y)
            backward = green_eval(self.kernel, y, x)
            self.assertLessEqual(abs(forward - backward), 1e-12 * max(abs(forward), 1e-300))

    def test_bound_dominance_and_nonnegativity(self):
        rng = np.random.default_rng(12)
        xs = random_ball_points(rng, self.domain, 1000)
        ys = random_ball_points(rng, self.domain, 1000)
        for x, y in zip(xs, ys):
            value = green_eval(self.kernel, x, y)
            self.assertGreaterEqual(value, 0.0)
            self.assertLessEqual(value, kernel_upper_bound(3, x, y) * (1 + 1e-12))

    def test_decreases_towards_boundary(self):
        x = np.array([0.2, 0.0, 0.0])
        direction = np.array([0.0, 0.6, 0.8])
        radii = [0.95, 0.97, 0.98, 0.99, 0.995, 1.0]
        values = [green_eval(self.kernel, x, r * direction) for r in radii]
        self.assertTrue(all(a > b for a, b in zip(values, values[1:])))
        self.assertAlmostEqual(values[-1], 0.0, places=12)

    def test_matrix_zeroes_coincident_pairs(self):
        points = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
        block = green_matrix(self.kernel, points, points)
        self.assertEqual(block[0, 0], 0.0)
        self.assertEqual(block[1, 1], 0.0)
        self.assertAlmostEqual(block[0, 1], 1 / (4 * math.pi), places=12)

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.3, max_value=3.0),
        st.integers(min_value=3, max_value=5),
        st.integers(min_value=0, max_value=2 ** 31 - 1),
    )
    def test_shifted_ball_bound(self, radius, dim, seed):
        domain = BallDomain(dim=dim, center=tuple(np.linspace(-1, 1, dim)), radius=radius)
        kernel = GreenKernel(domain)
        rng = np.random.default_rng(seed)
        x, y = random_ball_points(rng, domain, 2)
        value = green_eval(kernel, x, y)
        self.assertGreaterEqual(value, 0.0)
        self.assertLessEqual(value, kernel_upper_bound(dim, x, y) * (1 + 1e-10))


class KernelUpperBoundTests(SimpleTestCase):

    def test_unit_distance(self):
        self.assertAlmostEqual(kernel_upper_bound(3, [0, 0, 0], [1, 0, 0]), 1 / (4 * math.pi), places=12)

    def test_half_distance(self):
        self.assertAlmostEqual(kernel_upper_bound(3, [0, 0, 0], [0.5, 0, 0]), 1 / (2 * math.pi), places=12)

    def test_singular(self):
        with self.assertRaises(SingularityError):
            kernel_upper_bound(3, [0.2, 0, 0], [0.2, 0, 0])

    def test_nearly_coincident_points_are_singular(self):
        with self.assertRaises(SingularityError):
            kernel_upper_bound(4, [0.0, 0.0, 0.0, 0.0], [1e-155, 0.0, 0.0, 0.0])

    def test_overflow_is_singular(self):
        with self.assertRaises(SingularityError):
            kernel_upper_bound(40, [0.0] * 40, [1e-11] + [0.0] * 39)
