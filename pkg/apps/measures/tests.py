import json
import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import DomainError, PreconditionError
from apps.geometry.services.ball import BallDomain
from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.measures.services.laws import Law
from apps.measures.services.samplers import (
    AlloyModel,
    PointsModel,
    SeriesModel,
    derive_seed,
    lattice_sites,
    sample_alloy,
    sample_measure,
    sample_points,
    sample_series,
    tv_probability_below,
    tv_upper_bound,
)


def atoms(weights, dim=3):
    rng = np.random.default_rng(len(weights))
    return AtomicMeasure(dim, rng.uniform(-0.5, 0.5, (len(weights), dim)), weights)


class TotalVariationTests(SimpleTestCase):

    def test_empty(self):
        self.assertEqual(total_variation(AtomicMeasure.empty(3)), 0.0)

    def test_signed_weights(self):
        self.assertAlmostEqual(total_variation(atoms([1.0, -2.0, 0.5])), 3.5)

    def test_unit_dirac(self):
        self.assertEqual(total_variation(AtomicMeasure.dirac([0.0, 0.0, 0.0])), 1.0)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=0, max_size=8),
        st.floats(min_value=-5, max_value=5),
    )
    def test_homogeneity(self, weights, factor):
        measure = atoms(weights)
        self.assertAlmostEqual(
            total_variation(measure.scaled(factor)),
            abs(factor) * total_variation(measure),
            delta=1e-9,
        )

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(min_value=-10, max_value=10), max_size=6),
        st.lists(st.floats(min_value=-10, max_value=10), max_size=6),
    )
    def test_subadditivity(self, first, second):
        mu, nu = atoms(first), atoms(second)
        self.assertLessEqual(
            total_variation(mu.concatenated(nu)),
            total_variation(mu) + total_variation(nu) + 1e-9,
        )

    def test_combined_merges_coincident_atoms(self):
        location = [0.1, 0.2, 0.3]
        measure = AtomicMeasure.dirac(location, 2.0).concatenated(AtomicMeasure.dirac(location, -0.5))
        merged = measure.combined()
        self.assertEqual(len(merged), 1)
        self.assertAlmostEqual(total_variation(merged), 1.5)

    def test_difference_cancels_shared_atoms(self):
        mu = AtomicMeasure.dirac([0.0, 0.0, 0.0], 1.0).concatenated(AtomicMeasure.dirac([0.5, 0.0, 0.0], 2.0))
        nu = AtomicMeasure.dirac([0.0, 0.0, 0.0], 1.0).concatenated(AtomicMeasure.dirac([0.5, 0.0, 0.0], 2.5))
        self.assertAlmostEqual(total_variation(mu.difference(nu)), 0.5)

    def test_json_records(self):
        measure = AtomicMeasure.dirac([0.25, 0.0, -0.25], -1.5)
        records = json.loads(measure.to_json())
        self.assertEqual(records, [{'location': [0.25, 0.0, -0.25], 'weight': -1.5}])
        restored = AtomicMeasure.from_records(records, 3)
        np.testing.assert_array_equal(restored.locations, measure.locations)

    def test_support_validation(self):
        domain = BallDomain.unit(3, 1.0)
        AtomicMeasure.dirac([0.0, 0.0, 1.0]).validate_support(domain)
        with self.assertRaises(DomainError):
            AtomicMeasure.dirac([0.0, 0.0, 1.1]).validate_support(domain)


class LawTests(SimpleTestCase):

    def test_unknown_family(self):
        with self.assertRaises(PreconditionError):
            Law('cauchy')

    def test_bernoulli_probability_below(self):
        law = Law.bernoulli(0.25, value=2.0)
        self.assertAlmostEqual(law.prob_abs_below(1.0), 0.75)
        self.assertAlmostEqual(law.prob_abs_below(3.0), 1.0)

    def test_uniform_probability_below(self):
        self.assertAlmostEqual(Law.uniform(-1.0, 1.0).prob_abs_below(0.5), 0.5)
        self.assertAlmostEqual(Law.uniform(0.0, 2.0).prob_abs_below(0.5), 0.25)

    def test_poisson_probability_below(self):
        # P(N < 2.5) = P(N <= 2)
        expected = math.exp(-1.5) * (1 + 1.5 + 1.5 ** 2 / 2)
        self.assertAlmostEqual(Law.poisson(1.5).prob_abs_below(2.5), expected, places=12)

    def test_integer_counts(self):
        self.assertAlmostEqual(Law.integers(0, 2).prob_abs_below(2), 2 / 3)

    def test_round_trip_dict(self):
        law = Law.bernoulli(0.5, 3.0, base=-1.0)
        self.assertEqual(Law.from_dict(law.to_dict()), law)

    def test_abs_bounds(self):
        self.assertEqual(Law.uniform(-3.0, 1.0).abs_bound(), 3.0)
        self.assertEqual(Law.poisson(2.0).abs_bound(), math.inf)


class AlloySamplerTests(SimpleTestCase):

    def setUp(self):
        self.domain = BallDomain.unit(3, 1.5)

    def test_lattice_count(self):
        self.assertEqual(lattice_sites(self.domain, 1.0).shape[0], 19)

    def test_charges_bounded(self):
        model = AlloyModel(spacing=1.0, charge=Law.uniform(0.0, 0.3))
        measure = sample_alloy(model, self.domain, 5)
        self.assertEqual(len(measure), 19)
        self.assertLessEqual(total_variation(measure), 19 * 0.3)
        self.assertAlmostEqual(tv_upper_bound(model, self.domain), 19 * 0.3)

    def test_zero_charges(self):
        model = AlloyModel(spacing=1.0, charge=Law.deterministic(0.0))
        self.assertEqual(total_variation(sample_alloy(model, self.domain, 1)), 0.0)

    def test_empty_lattice_is_empty_measure(self):
        domain = BallDomain(dim=3, center=(0.5, 0.5, 0.5), radius=0.2)
        model = AlloyModel(spacing=1.0, charge=Law.deterministic(1.0))
        self.assertEqual(len(sample_alloy(model, domain, 0)), 0)

    def test_nonpositive_spacing(self):
        with self.assertRaises(PreconditionError):
            AlloyModel(spacing=0.0, charge=Law.deterministic(1.0))

    def test_seed_reproducibility(self):
        model = AlloyModel(spacing=0.5, charge=Law.uniform(-1.0, 1.0))
        first = sample_alloy(model, self.domain, derive_seed(42, 0, 3))
        second = sample_alloy(model, self.domain, derive_seed(42, 0, 3))
        other = sample_alloy(model, self.domain, derive_seed(42, 0, 4))
        np.testing.assert_array_equal(first.weights, second.weights)
        self.assertFalse(np.array_equal(first.weights, other.weights))

    def test_single_site_closed_form(self):
        domain = BallDomain.unit(3, 0.5)
        model = AlloyModel(spacing=1.0, charge=Law.bernoulli(0.5, 2.0))
        self.assertAlmostEqual(tv_probability_below(model, domain, 1.0), 0.5)


class PointsSamplerTests(SimpleTestCase):

    def setUp(self):
        self.domain = BallDomain.unit(3, 1.0)

    def test_zero_count(self):
        model = PointsModel(count=Law.deterministic(0))
        self.assertEqual(total_variation(sample_points(model, self.domain, 3)), 0.0)

    def test_deterministic_count(self):
        model = PointsModel(count=Law.deterministic(7))
        measure = sample_points(model, self.domain, 3)
        self.assertEqual(total_variation(measure), 7.0)
        measure.validate_support(self.domain)

    def test_poisson_mean_count(self):
        intensity = 2.0
        model = PointsModel.poisson(intensity, self.domain)
        expected = intensity * self.domain.volume
        counts = np.array([len(sample_points(model, self.domain, derive_seed(9, 0, i))) for i in range(10_000)])
        standard_error = math.sqrt(expected / counts.size)
        self.assertLessEqual(abs(counts.mean() - expected), 3 * standard_error)

    def test_combined_model_charges(self):
        model = PointsModel(count=Law.deterministic(4), charge=Law.uniform(0.0, 0.1))
        measure = sample_points(model, self.domain, 8)
        self.assertLessEqual(total_variation(measure), 0.4)
        self.assertAlmostEqual(tv_upper_bound(model, self.domain), 0.4)

    def test_unit_charge_closed_form(self):
        model = PointsModel(count=Law.integers(0, 2))
        self.assertAlmostEqual(tv_probability_below(model, self.domain, 1.5), 2 / 3)


class SeriesSamplerTests(SimpleTestCase):

    def setUp(self):
        self.domain = BallDomain.unit(3, 1.0)
        self.eta = [0.1, 0.0, 0.0]

    def test_zero_coefficients(self):
        model = SeriesModel(
            base_measures=(AtomicMeasure.dirac(self.eta),),
            coefficients=(Law.deterministic(0.0),) * 3,
        )
        self.assertEqual(len(sample_series(model, 0)), 0)

    def test_single_scaled_atom(self):
        model = SeriesModel(base_measures=(AtomicMeasure.dirac(self.eta),), coefficients=(Law.deterministic(2.0),))
        self.assertAlmostEqual(total_variation(sample_series(model, 0)), 2.0)

    def test_triangle_bound(self):
        rng = np.random.default_rng(1)
        bases = tuple(AtomicMeasure(3, rng.uniform(-0.4, 0.4, (2, 3)), rng.uniform(-1, 1, 2)) for _ in range(4))
        model = SeriesModel(base_measures=bases, coefficients=tuple(Law.uniform(-1, 1) for _ in range(4)))
        for seed in range(50):
            self.assertLessEqual(total_variation(sample_series(model, seed)), tv_upper_bound(model, self.domain) + 1e-12)

    def test_summable_bound_holds_on_every_draw(self):
        l0, sup_norm = 2.0, 1.0
        rng = np.random.default_rng(2)
        bases = tuple(
            AtomicMeasure(3, rng.uniform(-0.5, 0.5, (3, 3)), rng.uniform(0.5, 2.0, 3)) for _ in range(10)
        )
        model = SeriesModel.summable_bounded(bases, l0=l0, sup_norm=sup_norm, q=2.0)
        ceiling = 1.0 / (l0 * sup_norm)
        self.assertLess(tv_upper_bound(model, self.domain), ceiling)
        for seed in range(1000):
            self.assertLess(total_variation(sample_measure(model, self.domain, seed)), ceiling)

    def test_cumulative_series_telescopes(self):
        model = SeriesModel.geometric_exceedance(AtomicMeasure.dirac(self.eta), value=1.0, terms=3, p0=1.0, ratio=1.0)
        measure = sample_series(model, 0)
        self.assertAlmostEqual(total_variation(measure), 1.0)
        self.assertAlmostEqual(tv_upper_bound(model, self.domain), 1.0)

    def test_base_measure_count_checked(self):
        with self.assertRaises(PreconditionError):
            SeriesModel(
                base_measures=(AtomicMeasure.dirac(self.eta),) * 2,
                coefficients=(Law.deterministic(1.0),) * 3,
            )
