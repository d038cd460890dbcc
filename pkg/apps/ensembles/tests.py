import io
import math

import numpy as np
from django.test import SimpleTestCase

from apps.common.exceptions import (
    DegenerateDistributionError,
    HypothesisViolationError,
    PreconditionError,
    SampleFailureError,
)
from apps.geometry.services.ball import BallDomain
from apps.measures.services.atomic import AtomicMeasure
from apps.measures.services.laws import Law
from apps.measures.services.samplers import AlloyModel, PointsModel, SeriesModel
from apps.operators.services.quadrature import apply_H
from .services.borel_cantelli import borel_cantelli_check
from .services.config import EnsembleConfig, FieldSpec
from .services.limit_theorems import (
    chebyshev_bound,
    clt_self_test,
    clt_test,
    ks_critical_value,
    lln_test,
)
from .services.runner import run_ensemble
from .services.statistics import admissible_probability, moment_report, moment_series


UNIT_BALL = BallDomain.unit(3, 1.0)
EMPTY_MODEL = PointsModel(count=Law.deterministic(0.0))
SINGLE_SITE = 2.0


def make_config(model, **overrides):
    return EnsembleConfig(model=model, domain=UNIT_BALL, h=overrides.pop('h', 0.5), **overrides)


def summable_model(ceiling):
    rng = np.random.default_rng(5)
    bases = tuple(AtomicMeasure.dirac(rng.uniform(-0.5, 0.5, 3)) for _ in range(8))
    return SeriesModel.summable_bounded(bases, l0=UNIT_BALL.l0, sup_norm=1.0, q=2.0, ceiling=ceiling)


class RunEnsembleTests(SimpleTestCase):

    def test_single_empty_sample_without_nonlinearity(self):
        cfg = make_config(EMPTY_MODEL, b=FieldSpec('constant', 0.0), g=FieldSpec('constant', 0.05))
        report = run_ensemble(cfg)
        self.assertEqual(report.n, 1)
        self.assertTrue(report.all_admissible)
        expected = apply_H(cfg.spec.g, cfg.rule, cfg.kernel).sup_norm
        self.assertAlmostEqual(report.sup_norms[0], expected, places=14)

    def test_same_seed_identical_reports(self):
        cfg = make_config(AlloyModel(0.5, Law.uniform(0.0, 0.005)), n_samples=20, seed=3)
        first, second = io.StringIO(), io.StringIO()
        run_ensemble(cfg).to_csv(first)
        run_ensemble(cfg.replace()).to_csv(second)
        self.assertEqual(first.getvalue(), second.getvalue())

    def test_thread_count_does_not_change_records(self):
        model = PointsModel(count=Law.integers(0, 4), charge=Law.uniform(-0.05, 0.05))
        serial, threaded = io.StringIO(), io.StringIO()
        run_ensemble(make_config(model, n_samples=40, seed=9, threads=1)).to_csv(serial)
        run_ensemble(make_config(model, n_samples=40, seed=9, threads=4)).to_csv(threaded)
        self.assertEqual(serial.getvalue(), threaded.getvalue())

    def test_summable_model_always_admissible(self):
        report = run_ensemble(make_config(summable_model(ceiling=0.5), n_samples=500, seed=1))
        self.assertEqual(report.admissible_fraction, 1.0)
        self.assertTrue(np.all(report.taus < 0.5))
        self.assertEqual(report.norm_bound_violations(), [])

    def test_norm_bound_recorded_per_sample(self):
        model = AlloyModel(SINGLE_SITE, Law.bernoulli(0.5, 0.5))
        report = run_ensemble(make_config(model, n_samples=40, seed=2))
        for record in report.records:
            if record.admissible:
                self.assertLessEqual(record.sup_norm, record.norm_bound * 1.05)
            else:
                self.assertIsNone(record.norm_bound)
        self.assertEqual(report.norm_bound_violations(), [])
        self.assertIn('norm_bound', report.frame().columns)

    def test_failed_sample_reports_index(self):
        cfg = make_config(EMPTY_MODEL, tol=1e-14, max_iter=1)
        with self.assertRaises(SampleFailureError) as caught:
            run_ensemble(cfg)
        self.assertEqual(caught.exception.sample_index, 0)

    def test_aggregates(self):
        report = run_ensemble(make_config(AlloyModel(0.5, Law.uniform(0.0, 0.005)), n_samples=10))
        aggregates = report.aggregates()
        self.assertEqual(aggregates['n_samples'], 10)
        self.assertEqual(aggregates['admissible_fraction'], 1.0)
        self.assertAlmostEqual(aggregates['sup_norm_mean'], float(report.sup_norms.mean()))
        self.assertEqual(list(report.frame().columns)[:3], ['index', 'total_variation', 'tau'])

    def test_sample_count_must_be_positive(self):
        with self.assertRaises(PreconditionError):
            make_config(EMPTY_MODEL, n_samples=0)


class AdmissibleProbabilityTests(SimpleTestCase):

    def test_all_admissible(self):
        result = admissible_probability(run_ensemble(make_config(EMPTY_MODEL, n_samples=5)))
        self.assertEqual(result.p_hat, 1.0)
        self.assertLessEqual(result.ci_low, 1.0)
        self.assertEqual(result.reference_c0, 1.0)

    def test_deterministic_inadmissible_model(self):
        # tau = l0 ||f|| * 0.75 = 1.5
        model = AlloyModel(SINGLE_SITE, Law.deterministic(0.75))
        result = admissible_probability(run_ensemble(make_config(model, n_samples=10)))
        self.assertEqual(result.p_hat, 0.0)
        self.assertEqual(result.reference_c0, 0.0)
        self.assertEqual(result.reference_one, 0.0)

    def test_bernoulli_single_site(self):
        # Charge 0.5 gives tau = 2 c0
        model = AlloyModel(SINGLE_SITE, Law.bernoulli(0.5, 0.5))
        result = admissible_probability(run_ensemble(make_config(model, n_samples=1000, seed=4)))
        self.assertLessEqual(result.ci_low, 0.5)
        self.assertGreaterEqual(result.ci_high, 0.5)
        self.assertEqual(result.reference_c0, 0.5)
        self.assertLessEqual(result.ci_low, result.p_hat)
        self.assertLessEqual(result.p_hat, result.ci_high)

    def test_interval_narrows_with_samples(self):
        model = AlloyModel(SINGLE_SITE, Law.bernoulli(0.5, 0.5))
        small = admissible_probability(run_ensemble(make_config(model, n_samples=100)))
        large = admissible_probability(run_ensemble(make_config(model, n_samples=400)))
        self.assertLess(large.ci_high - large.ci_low, small.ci_high - small.ci_low)


class MomentReportTests(SimpleTestCase):

    def test_empty_measure_first_moment(self):
        report = moment_report(run_ensemble(make_config(EMPTY_MODEL, n_samples=3)), m=1)
        self.assertAlmostEqual(report.series_bound, 0.3125, places=14)
        self.assertAlmostEqual(report.closed_bound, 0.3125, places=14)

    def test_series_matches_closed_form(self):
        for m in (1, 2, 3):
            series, _ = moment_series(np.full(4, 0.9), m)
            self.assertLess(abs(series - 10.0 ** m) / 10.0 ** m, 1e-9)

    def test_series_agrees_up_to_tau_nine_tenths(self):
        # c0 = 0.95 with a small source keeps tau up to 0.9 admissible
        model = AlloyModel(SINGLE_SITE, Law.uniform(0.0, 0.45))
        cfg = make_config(model, n_samples=100, c0=0.95, g=FieldSpec('constant', 0.0005), seed=2)
        for m in (1, 2):
            report = moment_report(run_ensemble(cfg), m=m)
            self.assertLess(report.relative_gap, 1e-9)

    def test_summable_model_moments_below_bound(self):
        ensemble = run_ensemble(make_config(summable_model(ceiling=0.5), n_samples=500, seed=7))
        for m in (1, 2):
            report = moment_report(ensemble, m=m)
            self.assertLessEqual(report.empirical, report.closed_bound * 1.05)

    def test_inadmissible_sample_rejected(self):
        model = AlloyModel(SINGLE_SITE, Law.deterministic(0.75))
        with self.assertRaises(HypothesisViolationError):
            moment_report(run_ensemble(make_config(model, n_samples=2)), m=1)

    def test_order_must_be_positive_integer(self):
        ensemble = run_ensemble(make_config(EMPTY_MODEL))
        with self.assertRaises(PreconditionError):
            moment_report(ensemble, m=0)


class CltTests(SimpleTestCase):

    def test_critical_value(self):
        self.assertAlmostEqual(ks_critical_value(0.01, 200), math.sqrt(-math.log(0.005) / 400.0))

    def test_normal_surrogates_pass(self):
        passed = sum(clt_self_test(k=64, trials=200, seed=seed).passed for seed in range(40))
        self.assertGreaterEqual(passed, 38)

    def test_surrogate_statistic_scale(self):
        report = clt_self_test(k=16, trials=400, seed=1)
        self.assertLess(report.ks_stat, 3.0 / math.sqrt(400))

    def test_degenerate_model(self):
        cfg = make_config(AlloyModel(0.5, Law.deterministic(0.001)))
        with self.assertRaises(DegenerateDistributionError):
            clt_test(cfg, k=2, trials=4)

    def test_inadmissible_samples_rejected(self):
        cfg = make_config(AlloyModel(SINGLE_SITE, Law.bernoulli(0.5, 0.5)))
        with self.assertRaises(HypothesisViolationError):
            clt_test(cfg, k=4, trials=5, estimator='pooled')

    def test_pilot_estimator_bookkeeping(self):
        cfg = make_config(AlloyModel(0.5, Law.uniform(0.0, 0.007)), seed=2)
        report = clt_test(cfg, k=4, trials=10)
        self.assertEqual(report.pilot_size, 40)
        self.assertAlmostEqual(report.standardization_se, math.sqrt(0.1))
        self.assertEqual(report.sums.shape, (10,))

    def test_unknown_estimator(self):
        with self.assertRaises(PreconditionError):
            clt_test(make_config(EMPTY_MODEL), k=2, trials=4, estimator='median')

    def test_alloy_uniform_charges(self):
        # 33 sites, tau <= 2 * 33 * 0.007 < c0
        cfg = make_config(AlloyModel(0.5, Law.uniform(0.0, 0.007)), h=0.25, seed=11)
        report = clt_test(cfg, k=64, trials=200, estimator='pooled')
        self.assertTrue(report.passed, msg=report.to_dict())


class LlnTests(SimpleTestCase):

    def test_bound_halves_when_k_doubles(self):
        self.assertAlmostEqual(chebyshev_bound(0.1, 0.5, 20), chebyshev_bound(0.1, 0.5, 10) / 2.0, places=15)

    def test_bound_monotone(self):
        bounds = [chebyshev_bound(0.3, 0.2, k) for k in (100, 200, 400, 800)]
        self.assertEqual(bounds, sorted(bounds, reverse=True))
        self.assertLess(chebyshev_bound(0.1, 0.2, 400), chebyshev_bound(0.2, 0.2, 400))

    def test_deterministic_model(self):
        cfg = make_config(AlloyModel(0.5, Law.deterministic(0.001)))
        report = lln_test([cfg], k=8, delta=0.01, trials=5, pilot_size=10)
        self.assertEqual(report.empirical_prob, 0.0)
        self.assertTrue(report.passed)
        self.assertTrue(np.all(np.abs(report.deviations) < 1e-14))

    def test_law_hypothesis_violation(self):
        cfg = make_config(PointsModel(count=Law.deterministic(10.0), charge=Law.deterministic(0.1)))
        with self.assertRaises(HypothesisViolationError):
            lln_test([cfg], k=4, delta=0.1, trials=2)

    def test_config_count_must_match_k(self):
        cfg = make_config(EMPTY_MODEL)
        with self.assertRaises(PreconditionError):
            lln_test([cfg, cfg], k=3, delta=0.1, trials=2)

    def test_configs_must_share_problem_data(self):
        cfg = make_config(EMPTY_MODEL)
        other_source = cfg.replace(g=FieldSpec('constant', 0.02))
        with self.assertRaises(PreconditionError):
            lln_test([cfg, other_source], k=2, delta=0.1, trials=2)
        with self.assertRaises(PreconditionError):
            lln_test([cfg, cfg.replace(h=0.25)], k=2, delta=0.1, trials=2)

    def test_distinct_models_per_index(self):
        first = make_config(PointsModel(count=Law.integers(0, 2), charge=Law.deterministic(0.05)), tol=1e-6)
        second = first.replace(model=PointsModel(count=Law.integers(0, 2), charge=Law.deterministic(0.1)))
        report = lln_test([first, second] * 4, k=8, delta=0.05, trials=6, pilot_size=20)
        self.assertAlmostEqual(report.L, 0.4)
        self.assertAlmostEqual(report.Q0, 2.0 * 0.15625 / 0.6)
        self.assertEqual(report.deviations.shape, (6,))

    def test_points_model_small_charge(self):
        model = PointsModel(count=Law.integers(0, 2), charge=Law.deterministic(0.05))
        cfg = make_config(model, seed=21, tol=1e-6)
        report = lln_test([cfg], k=256, delta=0.05, trials=50)
        self.assertAlmostEqual(report.L, 0.2)
        self.assertTrue(report.passed, msg=report.to_dict())


class BorelCantelliTests(SimpleTestCase):

    ETA = [0.1, 0.0, 0.0]

    def test_zero_coefficients(self):
        model = SeriesModel(base_measures=(AtomicMeasure.dirac(self.ETA),), coefficients=(Law.deterministic(0.0),) * 5)
        report = borel_cantelli_check(model, c_tilde=0.3, k_max=5, n_draws=50, l0=UNIT_BALL.l0, sup_norm=1.0)
        self.assertTrue(np.all(report.exceedance_probs == 0))
        self.assertEqual(report.admissible_tail_fraction, 1.0)

    def test_geometric_exceedance(self):
        model = SeriesModel.geometric_exceedance(AtomicMeasure.dirac(self.ETA), value=0.4, terms=64)
        report = borel_cantelli_check(model, c_tilde=0.3, k_max=12, n_draws=4000, l0=UNIT_BALL.l0, sup_norm=1.0, seed=3)
        expected = 1.0 - 2.0 ** -12
        self.assertLessEqual(abs(report.partial_sums[-1] - expected), 3.0 * report.partial_sum_se[-1])
        self.assertEqual(report.admissible_tail_fraction, 1.0)
        self.assertTrue(np.all(np.diff(report.partial_sums) >= 0))
        self.assertLess(report.last_exceedance.max(), 64)

    def test_summable_model_never_exceeds(self):
        model = summable_model(ceiling=1.0)
        c_tilde = 0.9998 / UNIT_BALL.l0
        report = borel_cantelli_check(model, c_tilde=c_tilde, k_max=8, n_draws=200, l0=UNIT_BALL.l0, sup_norm=1.0)
        self.assertEqual(report.partial_sums[-1], 0.0)
        self.assertEqual(report.admissible_tail_fraction, 1.0)

    def test_threshold_range(self):
        model = summable_model(ceiling=1.0)
        for c_tilde in (0.0, 0.5, 0.7):
            with self.assertRaises(PreconditionError):
                borel_cantelli_check(model, c_tilde=c_tilde, k_max=4, n_draws=10, l0=UNIT_BALL.l0, sup_norm=1.0)

    def test_k_max_within_terms(self):
        with self.assertRaises(PreconditionError):
            borel_cantelli_check(summable_model(1.0), c_tilde=0.3, k_max=9, n_draws=10, l0=UNIT_BALL.l0, sup_norm=1.0)

    def test_threads_do_not_change_estimates(self):
        model = SeriesModel.geometric_exceedance(AtomicMeasure.dirac(self.ETA), value=0.4, terms=16)
        kwargs = dict(c_tilde=0.3, k_max=10, n_draws=300, l0=UNIT_BALL.l0, sup_norm=1.0, seed=8)
        serial = borel_cantelli_check(model, threads=1, **kwargs)
        threaded = borel_cantelli_check(model, threads=3, **kwargs)
        np.testing.assert_array_equal(serial.partial_sums, threaded.partial_sums)
