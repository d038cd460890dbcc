import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import (
    InsufficientHistoryError,
    NonConvergenceError,
    NotAContractionError,
    PreconditionError,
)
from apps.geometry.services.ball import BallDomain
from apps.geometry.services.green import GreenKernel
from apps.measures.services.atomic import AtomicMeasure
from apps.measures.services.laws import Law
from apps.measures.services.samplers import AlloyModel, PointsModel, sample_measure
from apps.operators.services.grid import GridField
from apps.operators.services.quadrature import QUADRATURE_SLACK, apply_H, build_rule
from apps.potentials.services.profiles import BumpProfile
from apps.solver.services.contraction import (
    ContractionBudget,
    ProblemSpec,
    a_priori_iterations,
    contraction_constants,
    contraction_factor,
    eps0,
    in_continuity_domain,
    is_admissible,
    series_norm_bound,
)
from apps.solver.services.picard import observed_contraction, picard_solve
from apps.solver.services.stability import lipschitz_gap


UNIT_BALL = BallDomain.unit(3, 1.0)
KERNEL = GreenKernel(UNIT_BALL)
COARSE_RULE = build_rule(UNIT_BALL, 1.0 / 4)
TENT = BumpProfile.tent(1.0, 0.5)


def make_spec(layout, p=2.0, b=0.1, g=0.07, c0=0.5, f=TENT):
    g_field = g if isinstance(g, GridField) else GridField.constant(layout, g)
    return ProblemSpec(p=p, b=GridField.constant(layout, b), g=g_field, f=f, c0=c0)


def atoms_with_mass(mass, count=3):
    locations = np.array([[0.2, 0.0, 0.0], [-0.3, 0.1, 0.0], [0.0, -0.2, 0.4], [0.1, 0.1, 0.1]])[:count]
    return AtomicMeasure(3, locations, np.full(count, mass / count))


class ContractionConstantsTests(SimpleTestCase):

    def test_reference_constants(self):
        budget = contraction_constants(make_spec(COARSE_RULE.layout), AtomicMeasure.empty(3), UNIT_BALL)
        self.assertAlmostEqual(budget.K, 0.4, places=14)
        self.assertAlmostEqual(budget.eps, 0.15625, places=14)
        self.assertAlmostEqual(budget.eps0, 0.15625, places=14)

    def test_empty_measure(self):
        budget = contraction_constants(make_spec(COARSE_RULE.layout), AtomicMeasure.empty(3), UNIT_BALL)
        self.assertEqual(budget.tau, 0.0)
        self.assertAlmostEqual(budget.q, 0.25, places=14)

    def test_tau_product(self):
        budget = contraction_constants(make_spec(COARSE_RULE.layout), atoms_with_mass(0.25, 1), UNIT_BALL)
        self.assertAlmostEqual(budget.tau, 0.5, places=14)

    def test_q_undefined_beyond_one(self):
        budget = contraction_constants(make_spec(COARSE_RULE.layout), atoms_with_mass(0.6, 1), UNIT_BALL)
        self.assertIsNone(budget.q)
        self.assertEqual(budget.norm_bound, math.inf)
        self.assertFalse(is_admissible(budget, 0.0, UNIT_BALL.l0))

    def test_scaling(self):
        layout = COARSE_RULE.layout
        mu = atoms_with_mass(0.2)
        base = contraction_constants(make_spec(layout, b=0.1), mu, UNIT_BALL)
        doubled = contraction_constants(make_spec(layout, b=0.2), mu, UNIT_BALL)
        halved = contraction_constants(make_spec(layout, b=0.1), mu.scaled(0.5), UNIT_BALL)
        self.assertEqual(doubled.K, 2 * base.K)
        self.assertEqual(halved.tau, base.tau / 2)

    def test_linear_problem(self):
        spec = make_spec(COARSE_RULE.layout, b=0.0, g=0.05)
        budget = contraction_constants(spec, atoms_with_mass(0.1), UNIT_BALL)
        self.assertEqual(budget.K, 0.0)
        self.assertAlmostEqual(budget.eps, UNIT_BALL.l0 * 0.05)
        self.assertEqual(budget.q, budget.tau)

    def test_spec_preconditions(self):
        layout = COARSE_RULE.layout
        with self.assertRaises(PreconditionError):
            make_spec(layout, p=0.5)
        with self.assertRaises(PreconditionError):
            make_spec(layout, c0=1.0)
        with self.assertRaises(PreconditionError):
            make_spec(layout, g=0.5)


class IsAdmissibleTests(SimpleTestCase):

    @staticmethod
    def budget(tau, p=2.0, K=0.4, c0=0.5):
        eps = eps0(p, K, c0)
        return ContractionBudget(tau=tau, K=K, eps=eps, eps0=eps, p=p, q=contraction_factor(tau, K, eps, p))

    def test_tau_above_one(self):
        self.assertFalse(is_admissible(self.budget(1.2), 0.0, 2.0))

    def test_zero_tau(self):
        self.assertTrue(is_admissible(self.budget(0.0), 0.0, 2.0))

    def test_source_bound(self):
        budget = self.budget(0.1)
        self.assertTrue(is_admissible(budget, budget.eps / 2.0, 2.0))
        self.assertFalse(is_admissible(budget, budget.eps / 2.0 * 1.001, 2.0))

    def test_equivalence_with_direct_condition(self):
        rng = np.random.default_rng(0)
        for p in (1.5, 2.0, 3.0):
            for c0 in (0.2, 0.5, 0.8):
                for tau in rng.uniform(0.0, 2.0, 1000):
                    direct = tau < 1 and (1 - c0) ** p / (1 - tau) ** (p - 1) + tau < 1
                    decided = is_admissible(self.budget(tau, p=p, c0=c0), 0.0, 2.0)
                    self.assertEqual(decided, direct)
                    self.assertEqual(decided, tau < c0)

    def test_boundary_at_c0(self):
        low, high = 0.0, 0.999
        for _ in range(200):
            middle = 0.5 * (low + high)
            if is_admissible(self.budget(middle), 0.0, 2.0):
                low = middle
            else:
                high = middle
        self.assertLessEqual(abs(low - 0.5), 1e-12)


class APrioriIterationsTests(SimpleTestCase):

    def test_zero_first_step(self):
        self.assertEqual(a_priori_iterations(0.5, 0.0, 1e-6), 0)

    def test_reference_count(self):
        self.assertEqual(a_priori_iterations(0.5, 1.0, 1e-6), 21)

    def test_constant_map(self):
        self.assertEqual(a_priori_iterations(0.0, 1.0, 1e-6), 1)

    def test_not_a_contraction(self):
        with self.assertRaises(NotAContractionError):
            a_priori_iterations(1.0, 1.0, 1e-6)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=1e-6, max_value=10.0),
        st.floats(min_value=1e-12, max_value=1e-2),
    )
    def test_smallest_and_monotone(self, q, first, tol):
        k = a_priori_iterations(q, first, tol)
        self.assertLessEqual(q ** k * first / (1 - q), tol)
        if k > 0:
            self.assertGreater(q ** (k - 1) * first / (1 - q), tol)
        self.assertLessEqual(a_priori_iterations(q, first, tol * 10), k)


class NormBoundTests(SimpleTestCase):

    def test_geometric_series_identity(self):
        for tau in (0.0, 0.1, 0.45, 0.9):
            for terms in range(0, 30):
                value = series_norm_bound(0.15625, tau, terms)
                self.assertLessEqual(abs(value - 2 * 0.15625 / (1 - tau)), 1e-12 * value)

    def test_continuity_domain(self):
        self.assertTrue(in_continuity_domain(atoms_with_mass(0.4), 0.05, TENT, 2.0, 0.1, UNIT_BALL))
        self.assertFalse(in_continuity_domain(atoms_with_mass(0.5), 0.05, TENT, 2.0, 0.1, UNIT_BALL))
        self.assertFalse(in_continuity_domain(atoms_with_mass(0.1), 0.7, TENT, 2.0, 0.1, UNIT_BALL))


class PicardSolveTests(SimpleTestCase):

    def setUp(self):
        self.layout = COARSE_RULE.layout

    def test_zero_source(self):
        outcome = picard_solve(make_spec(self.layout, g=0.0), atoms_with_mass(0.1), COARSE_RULE, KERNEL)
        self.assertTrue(outcome.admissible)
        self.assertEqual(outcome.sup_norm, 0.0)
        self.assertLessEqual(outcome.iterations, 1)
        self.assertEqual(outcome.residual, 0.0)

    def test_linear_problem_without_potential(self):
        spec = make_spec(self.layout, b=0.0, g=0.05)
        outcome = picard_solve(spec, AtomicMeasure.empty(3), COARSE_RULE, KERNEL)
        np.testing.assert_array_equal(outcome.u.values, apply_H(spec.g, COARSE_RULE, KERNEL).values)
        self.assertEqual(outcome.iterations, 1)
        self.assertEqual(observed_contraction(outcome.gaps), 0.0)

    def test_reference_instance(self):
        mu = atoms_with_mass(0.15)
        outcome = picard_solve(make_spec(self.layout), mu, COARSE_RULE, KERNEL)
        self.assertAlmostEqual(outcome.budget.tau, 0.3, places=14)
        self.assertLessEqual(outcome.residual, 1e-8)
        self.assertLessEqual(outcome.sup_norm, 2 * 0.15625 / 0.7 * (1 + QUADRATURE_SLACK))

    def test_inadmissible_instance(self):
        outcome = picard_solve(make_spec(self.layout), atoms_with_mass(0.3), COARSE_RULE, KERNEL)
        self.assertFalse(outcome.admissible)
        self.assertIsNone(outcome.u)
        report = outcome.to_dict()
        self.assertIsNone(report['sup_norm'])
        self.assertFalse(report['admissible'])

    def test_report_keys(self):
        outcome = picard_solve(make_spec(self.layout), atoms_with_mass(0.1), COARSE_RULE, KERNEL)
        self.assertEqual(
            set(outcome.to_dict()),
            {'admissible', 'tau', 'K', 'eps0', 'q', 'iterations', 'residual', 'sup_norm', 'norm_bound'},
        )

    def test_uniqueness_from_different_starts(self):
        tol = 1e-10
        spec = make_spec(self.layout)
        mu = atoms_with_mass(0.1)
        first = picard_solve(spec, mu, COARSE_RULE, KERNEL, tol=tol)
        rng = np.random.default_rng(1)
        start = GridField(self.layout, rng.uniform(-1, 1, self.layout.size) * first.norm_bound)
        second = picard_solve(spec, mu, COARSE_RULE, KERNEL, tol=tol, initial=start)
        self.assertLessEqual((first.u - second.u).sup_norm, 10 * tol)

    def test_initial_outside_ball(self):
        spec = make_spec(self.layout)
        start = GridField.constant(self.layout, 10.0)
        with self.assertRaises(PreconditionError):
            picard_solve(spec, atoms_with_mass(0.1), COARSE_RULE, KERNEL, initial=start)

    def test_iteration_cap(self):
        with self.assertRaises(NonConvergenceError):
            picard_solve(make_spec(self.layout), atoms_with_mass(0.2), COARSE_RULE, KERNEL, max_iter=1)


class ObservedContractionTests(SimpleTestCase):

    def test_insufficient_history(self):
        with self.assertRaises(InsufficientHistoryError):
            observed_contraction([0.1])

    def test_ratio(self):
        self.assertAlmostEqual(observed_contraction([1.0, 0.5, 0.2, 1e-15, 0.0]), 0.5)

    def test_linear_problem_ratio(self):
        layout = COARSE_RULE.layout
        mu = atoms_with_mass(0.2)
        outcome = picard_solve(make_spec(layout, b=0.0, g=0.05), mu, COARSE_RULE, KERNEL)
        self.assertLessEqual(observed_contraction(outcome.gaps), outcome.budget.tau + 0.05)


class FixedPointContractTests(SimpleTestCase):
    """Random admissible instances on the h = R/8 grid."""

    def test_random_instances(self):
        rule = build_rule(UNIT_BALL, 1.0 / 8)
        l0 = UNIT_BALL.l0
        rng = np.random.default_rng(2024)
        for index in range(50):
            p = float(rng.choice([1.5, 2.0, 3.0]))
            c0 = float(rng.uniform(0.3, 0.8))
            b_norm = float(rng.uniform(0.05, 1.0))
            f = BumpProfile.tent(1.0, float(rng.uniform(0.3, 1.0)))
            K = l0 * p * b_norm
            g_norm = float(rng.uniform(0.1, 0.95)) * eps0(p, K, c0) / l0
            g = GridField(rule.layout, rng.uniform(-g_norm, g_norm, rule.node_count))
            spec = ProblemSpec(p=p, b=GridField.constant(rule.layout, b_norm), g=g, f=f, c0=c0)

            mass_cap = 0.9 * c0 / (l0 * f.sup_norm)
            if index % 2 == 0:
                model = AlloyModel(spacing=0.5, charge=Law.uniform(0.0, mass_cap / 33))
            else:
                model = PointsModel(count=Law.integers(0, 4), charge=Law.uniform(-mass_cap / 4, mass_cap / 4))
            mu = sample_measure(model, UNIT_BALL, index)

            outcome = picard_solve(spec, mu, rule, KERNEL)
            self.assertTrue(outcome.admissible)
            self.assertLessEqual(outcome.residual, 1e-8)
            self.assertLessEqual(outcome.sup_norm, outcome.norm_bound * (1 + QUADRATURE_SLACK))
            self.assertLessEqual(observed_contraction(outcome.gaps), outcome.budget.q + 0.05)


class LipschitzGapTests(SimpleTestCase):

    def setUp(self):
        self.layout = COARSE_RULE.layout
        self.rng = np.random.default_rng(3)

    def solve(self, spec, mu):
        return picard_solve(spec, mu, COARSE_RULE, KERNEL, tol=1e-12)

    def test_identical_data(self):
        spec = make_spec(self.layout)
        mu = atoms_with_mass(0.1)
        outcome = self.solve(spec, mu)
        gap = lipschitz_gap(outcome, outcome, spec.g, spec.g, mu, mu, spec)
        self.assertEqual(gap.lhs, 0.0)
        self.assertTrue(gap.holds())

    def test_requires_admissible(self):
        spec = make_spec(self.layout)
        good = self.solve(spec, atoms_with_mass(0.1))
        bad = self.solve(spec, atoms_with_mass(0.3))
        with self.assertRaises(PreconditionError):
            lipschitz_gap(good, bad, spec.g, spec.g, atoms_with_mass(0.1), atoms_with_mass(0.3), spec)

    def test_perturbation_pairs(self):
        checked = 0
        for index in range(100):
            p = (1.5, 2.0, 3.0)[index % 3]
            g1 = GridField(self.layout, self.rng.uniform(-0.06, 0.06, self.layout.size))
            spec1 = make_spec(self.layout, p=p, g=g1)
            locations = self.rng.uniform(-0.5, 0.5, (3, 3))
            weights = self.rng.uniform(0.0, 0.35 / 6, 3)
            mu1 = AtomicMeasure(3, locations, weights)

            if index % 2 == 0:
                g2 = g1 + GridField(self.layout, self.rng.uniform(-0.01, 0.01, self.layout.size))
                mu2 = mu1
            else:
                g2 = g1
                perturbed = weights.copy()
                perturbed[index % 3] += self.rng.uniform(-0.005, 0.005)
                mu2 = AtomicMeasure(3, locations, np.abs(perturbed))
            spec2 = make_spec(self.layout, p=p, g=g2)

            out1, out2 = self.solve(spec1, mu1), self.solve(spec2, mu2)
            gap = lipschitz_gap(out1, out2, g1, g2, mu1, mu2, spec1)
            if gap.denominator < 0.05:
                continue
            checked += 1
            self.assertLessEqual(gap.lhs, gap.rhs * (1 + QUADRATURE_SLACK))
        self.assertEqual(checked, 100)
