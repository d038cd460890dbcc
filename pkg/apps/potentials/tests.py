import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import PreconditionError
from apps.geometry.services.ball import BallDomain
from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.operators.services.grid import GridLayout
from apps.potentials.services.profiles import BumpProfile
from apps.potentials.services.potential import (
    evaluate_potential,
    potential_field,
    potential_sup_bound,
)


def random_measure(rng, domain, count):
    directions = rng.standard_normal((count, domain.dim))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    radii = domain.radius * rng.random(count) ** (1.0 / domain.dim)
    return AtomicMeasure(domain.dim, directions * radii[:, None], rng.uniform(-2.0, 2.0, count))


def random_profile(rng):
    family = rng.choice(['tent', 'truncated_gaussian', 'constant'])
    amplitude = rng.uniform(-3.0, 3.0)
    if family == 'tent':
        return BumpProfile.tent(amplitude, rng.uniform(0.1, 2.0))
    if family == 'truncated_gaussian':
        return BumpProfile.truncated_gaussian(amplitude, rng.uniform(0.1, 1.0), rng.uniform(0.1, 2.0))
    return BumpProfile.constant(amplitude)


class BumpProfileTests(SimpleTestCase):

    def test_peak_equals_amplitude(self):
        for profile in (
            BumpProfile.tent(2.5, 0.7),
            BumpProfile.truncated_gaussian(2.5, 0.3, 0.9),
            BumpProfile.constant(2.5),
        ):
            self.assertAlmostEqual(float(profile(np.zeros(3))), 2.5, places=14)
            self.assertEqual(profile.sup_norm, 2.5)

    def test_negative_amplitude_sup_norm(self):
        self.assertEqual(BumpProfile.tent(-1.5).sup_norm, 1.5)

    def test_tent_values(self):
        profile = BumpProfile.tent(1.0, 1.0)
        values = profile.radial([0.0, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(values, [1.0, 0.5, 0.0, 0.0])

    def test_truncated_gaussian_is_continuous_at_cutoff(self):
        profile = BumpProfile.truncated_gaussian(1.0, 0.4, 1.0)
        inside = float(profile.radial(1.0 - 1e-9))
        self.assertLess(abs(inside), 1e-7)
        self.assertEqual(float(profile.radial(1.0)), 0.0)

    def test_truncated_gaussian_decreasing(self):
        profile = BumpProfile.truncated_gaussian(1.0, 0.5, 1.2)
        values = profile.radial(np.linspace(0.0, 1.2, 50))
        self.assertTrue(np.all(np.diff(values) <= 0))

    def test_invalid_parameters(self):
        with self.assertRaises(PreconditionError):
            BumpProfile('gaussian')
        with self.assertRaises(PreconditionError):
            BumpProfile.tent(1.0, 0.0)
        with self.assertRaises(PreconditionError):
            BumpProfile.truncated_gaussian(1.0, -1.0, 1.0)

    def test_round_trip_dict(self):
        profile = BumpProfile.truncated_gaussian(0.5, 0.2, 0.8)
        self.assertEqual(BumpProfile.from_dict(profile.to_dict()), profile)


class EvaluatePotentialTests(SimpleTestCase):

    def setUp(self):
        self.tent = BumpProfile.tent(1.0, 1.0)

    def test_empty_measure(self):
        self.assertEqual(evaluate_potential(self.tent, AtomicMeasure.empty(3), [0.1, 0.2, 0.3]), 0.0)

    def test_atom_at_evaluation_point(self):
        x = [0.2, -0.1, 0.4]
        for profile in (self.tent, BumpProfile.truncated_gaussian(1.7, 0.3, 0.5), BumpProfile.constant(1.7)):
            self.assertAlmostEqual(evaluate_potential(profile, AtomicMeasure.dirac(x), x), profile.amplitude)

    def test_tent_example(self):
        mu = AtomicMeasure.dirac([0.5, 0.0, 0.0], 1.0).concatenated(AtomicMeasure.dirac([0.0, 2.0, 0.0], 2.0))
        self.assertAlmostEqual(evaluate_potential(self.tent, mu, [0.0, 0.0, 0.0]), 0.5)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_linearity_in_measure(self, seed):
        rng = np.random.default_rng(seed)
        domain = BallDomain.unit(3, 1.0)
        profile = random_profile(rng)
        mu, nu = random_measure(rng, domain, 5), random_measure(rng, domain, 4)
        x = rng.uniform(-0.5, 0.5, 3)
        separate = evaluate_potential(profile, mu, x) + evaluate_potential(profile, nu, x)
        joint = evaluate_potential(profile, mu.concatenated(nu), x)
        self.assertLessEqual(abs(joint - separate), 1e-12 * max(1.0, abs(separate)))


class PotentialFieldTests(SimpleTestCase):

    def setUp(self):
        self.domain = BallDomain.unit(3, 1.0)
        self.layout = GridLayout.build(self.domain, 0.25)

    def test_empty_measure_zero_field(self):
        field = potential_field(BumpProfile.tent(), AtomicMeasure.empty(3), self.layout)
        self.assertEqual(field.sup_norm, 0.0)

    def test_matches_pointwise_evaluation(self):
        rng = np.random.default_rng(3)
        profile = BumpProfile.truncated_gaussian(1.0, 0.4, 0.9)
        mu = random_measure(rng, self.domain, 6)
        field = potential_field(profile, mu, self.layout)
        for index in (0, self.layout.size // 2, self.layout.size - 1):
            expected = evaluate_potential(profile, mu, self.layout.nodes[index])
            self.assertAlmostEqual(field.values[index], expected, places=12)

    def test_sup_bound_dominates_field(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            profile = random_profile(rng)
            mu = random_measure(rng, self.domain, int(rng.integers(0, 8)))
            field = potential_field(profile, mu, self.layout)
            self.assertLessEqual(field.sup_norm, potential_sup_bound(profile, mu) * (1 + 1e-12))

    def test_tent_maximum_at_nearest_node(self):
        eta = np.array([0.13, -0.07, 0.21])
        field = potential_field(BumpProfile.tent(1.0, 0.6), AtomicMeasure.dirac(eta), self.layout)
        nearest = np.argmin(np.linalg.norm(self.layout.nodes - eta, axis=1))
        self.assertEqual(int(np.argmax(field.values)), int(nearest))


class PotentialSupBoundTests(SimpleTestCase):

    def test_product(self):
        mu = AtomicMeasure(3, np.zeros((3, 3)), [1.0, -2.0, 0.5])
        self.assertAlmostEqual(potential_sup_bound(BumpProfile.constant(2.0), mu), 7.0)

    def test_empty(self):
        self.assertEqual(potential_sup_bound(BumpProfile.tent(), AtomicMeasure.empty(3)), 0.0)

    def test_constant_profile_attains_bound(self):
        mu = AtomicMeasure(3, np.zeros((2, 3)), [1.0, 2.0])
        profile = BumpProfile.constant(1.5)
        self.assertTrue(math.isclose(evaluate_potential(profile, mu, [0.3, 0, 0]), potential_sup_bound(profile, mu)))
        self.assertEqual(total_variation(mu), 3.0)
