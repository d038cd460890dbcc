import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, override_settings
from hypothesis import given, settings, strategies as st

from apps.common.exceptions import EmptyRuleError, LayoutMismatchError, PreconditionError
from apps.geometry.services.ball import BallDomain
from apps.geometry.services.green import GreenKernel
from apps.operators.services.grid import GridField, GridLayout
from apps.operators.services.quadrature import (
    QUADRATURE_SLACK,
    apply_H,
    build_rule,
    compose_rhs,
    nonlinear_term,
    self_weight,
    torsion_error,
    torsion_solution,
)


UNIT_BALL = BallDomain.unit(3, 1.0)
KERNEL = GreenKernel(UNIT_BALL)
COARSE_RULE = build_rule(UNIT_BALL, 1.0 / 4)
MEDIUM_RULE = build_rule(UNIT_BALL, 1.0 / 6)


def random_field(rng, layout, scale=1.0):
    return GridField(layout, scale * rng.uniform(-1.0, 1.0, layout.size))


class GridLayoutTests(SimpleTestCase):

    def test_node_count_matches_enumeration(self):
        layout = GridLayout.build(UNIT_BALL, 0.25)
        expected = sum(
            1
            for i in range(-4, 5)
            for j in range(-4, 5)
            for k in range(-4, 5)
            if i * i + j * j + k * k < 16
        )
        self.assertEqual(layout.size, expected)

    def test_nodes_strictly_inside(self):
        layout = GridLayout.build(BallDomain(dim=3, center=(0.3, -0.2, 1.0), radius=0.8), 0.1)
        distances = np.linalg.norm(layout.nodes - np.array([0.3, -0.2, 1.0]), axis=1)
        self.assertTrue(np.all(distances < 0.8))

    def test_layout_equality_by_domain_and_spacing(self):
        self.assertEqual(GridLayout.build(UNIT_BALL, 0.5), GridLayout.build(UNIT_BALL, 0.5))
        self.assertNotEqual(GridLayout.build(UNIT_BALL, 0.5), GridLayout.build(UNIT_BALL, 0.25))

    def test_nonpositive_spacing(self):
        with self.assertRaises(PreconditionError):
            GridLayout.build(UNIT_BALL, 0.0)


class GridFieldTests(SimpleTestCase):

    def setUp(self):
        self.layout = GridLayout.build(UNIT_BALL, 0.5)

    def test_sup_norm(self):
        values = np.zeros(self.layout.size)
        values[3] = -2.5
        self.assertEqual(GridField(self.layout, values).sup_norm, 2.5)

    def test_arithmetic(self):
        one = GridField.constant(self.layout, 1.0)
        two = one + one
        np.testing.assert_array_equal((two * 3.0 - one).values, np.full(self.layout.size, 5.0))
        np.testing.assert_array_equal((-two).values, np.full(self.layout.size, -2.0))

    def test_mismatched_layouts(self):
        other = GridField.constant(GridLayout.build(UNIT_BALL, 0.25), 1.0)
        with self.assertRaises(LayoutMismatchError):
            GridField.constant(self.layout, 1.0) + other

    def test_wrong_value_count(self):
        with self.assertRaises(LayoutMismatchError):
            GridField(self.layout, np.zeros(self.layout.size + 1))

    def test_csv_columns(self):
        field = GridField.from_function(self.layout, lambda x: x[:, 0] + 1.0 / 3.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'field.csv'
            field.to_csv(path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['x1', 'x2', 'x3', 'value'])
        np.testing.assert_array_equal(frame['value'].to_numpy(), field.values)


class BuildRuleTests(SimpleTestCase):

    def test_empty_rule(self):
        with self.assertRaises(EmptyRuleError):
            build_rule(UNIT_BALL, 2.0)
        with self.assertRaises(EmptyRuleError):
            build_rule(UNIT_BALL, 2.5)

    def test_weights_approximate_volume(self):
        rule = build_rule(UNIT_BALL, 1.0 / 16)
        total = rule.weights.sum()
        self.assertLessEqual(abs(total - 4 * math.pi / 3), 0.05 * 4 * math.pi / 3)

    def test_self_weight_matches_equivalent_ball(self):
        h = 0.1
        radius = (h ** 3 * 3 / (4 * math.pi)) ** (1 / 3)
        self.assertAlmostEqual(self_weight(3, h), radius ** 2 / 2, places=15)

    def test_kernel_domain_checked(self):
        other = GreenKernel(BallDomain.unit(3, 2.0))
        with self.assertRaises(LayoutMismatchError):
            apply_H(GridField.constant(COARSE_RULE.layout, 1.0), COARSE_RULE, other)


class ApplyHTests(SimpleTestCase):

    def test_zero_field(self):
        result = apply_H(GridField.zeros(COARSE_RULE.layout), COARSE_RULE, KERNEL)
        self.assertEqual(result.sup_norm, 0.0)

    def test_constant_field_within_l0(self):
        result = apply_H(GridField.constant(MEDIUM_RULE.layout, 1.0), MEDIUM_RULE, KERNEL)
        self.assertLessEqual(result.sup_norm, UNIT_BALL.l0 * (1 + QUADRATURE_SLACK))

    def test_torsion_oracle_and_refinement(self):
        coarse = torsion_error(build_rule(UNIT_BALL, 1.0 / 8), KERNEL)
        fine = torsion_error(build_rule(UNIT_BALL, 1.0 / 12), KERNEL)
        finest = torsion_error(build_rule(UNIT_BALL, 1.0 / 16), KERNEL)
        self.assertLessEqual(fine, 0.03)
        self.assertLess(fine, coarse)
        self.assertLess(finest, fine)

    def test_center_value(self):
        rule = build_rule(UNIT_BALL, 1.0 / 12)
        center = int(np.argmin(np.linalg.norm(rule.nodes, axis=1)))
        value = apply_H(GridField.constant(rule.layout, 1.0), rule, KERNEL).values[center]
        self.assertLessEqual(abs(value - 1.0 / 6) / (1.0 / 6), 0.03)

    def test_torsion_solution_at_center(self):
        field = torsion_solution(COARSE_RULE.layout)
        self.assertAlmostEqual(field.sup_norm, 1.0 / 6)

    @override_settings(LAB_KERNEL_CACHE_MAX_NODES=0)
    def test_streamed_rows_match_cached_matrix(self):
        rule = build_rule(UNIT_BALL, 1.0 / 4)
        phi = random_field(np.random.default_rng(5), rule.layout)
        streamed = apply_H(phi, rule, KERNEL)
        cached = COARSE_RULE.matrix(KERNEL) @ phi.values
        np.testing.assert_allclose(streamed.values, cached, rtol=1e-12, atol=1e-15)

    def test_estimate_on_random_fields(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            phi = random_field(rng, MEDIUM_RULE.layout, scale=rng.uniform(0.1, 10.0))
            result = apply_H(phi, MEDIUM_RULE, KERNEL)
            self.assertLessEqual(result.sup_norm, UNIT_BALL.l0 * phi.sup_norm * (1 + QUADRATURE_SLACK))

    @settings(max_examples=30, deadline=None)
    @given(
        st.floats(min_value=-5, max_value=5),
        st.floats(min_value=-5, max_value=5),
        st.integers(min_value=0, max_value=2 ** 31 - 1),
    )
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        phi, psi = random_field(rng, COARSE_RULE.layout), random_field(rng, COARSE_RULE.layout)
        joint = apply_H(a * phi + b * psi, COARSE_RULE, KERNEL)
        separate = a * apply_H(phi, COARSE_RULE, KERNEL) + b * apply_H(psi, COARSE_RULE, KERNEL)
        scale = max(1.0, separate.sup_norm)
        self.assertLessEqual((joint - separate).sup_norm, 1e-10 * scale)

    def test_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            phi = GridField(COARSE_RULE.layout, rng.random(COARSE_RULE.node_count))
            self.assertTrue(np.all(apply_H(phi, COARSE_RULE, KERNEL).values >= 0))

    def test_layout_mismatch(self):
        with self.assertRaises(LayoutMismatchError):
            apply_H(GridField.constant(MEDIUM_RULE.layout, 1.0), COARSE_RULE, KERNEL)


class ComposeRhsTests(SimpleTestCase):

    def setUp(self):
        self.layout = COARSE_RULE.layout
        self.rng = np.random.default_rng(8)

    def test_zero_iterate_gives_h_of_g(self):
        g = random_field(self.rng, self.layout)
        V, b = random_field(self.rng, self.layout), random_field(self.rng, self.layout)
        result = compose_rhs(g, b, V, GridField.zeros(self.layout), 2.0, COARSE_RULE, KERNEL)
        np.testing.assert_array_equal(result.values, apply_H(g, COARSE_RULE, KERNEL).values)

    def test_zero_data_gives_zero(self):
        zero = GridField.zeros(self.layout)
        u = random_field(self.rng, self.layout)
        self.assertEqual(compose_rhs(zero, zero, zero, u, 3.0, COARSE_RULE, KERNEL).sup_norm, 0.0)

    def test_norm_chain(self):
        l0 = UNIT_BALL.l0
        for p in (1.5, 2.0, 3.0):
            for _ in range(20):
                g, b, V, u = (random_field(self.rng, self.layout, self.rng.uniform(0.01, 2.0)) for _ in range(4))
                bound = l0 * (g.sup_norm + V.sup_norm * u.sup_norm + b.sup_norm * u.sup_norm ** p)
                result = compose_rhs(g, b, V, u, p, COARSE_RULE, KERNEL)
                self.assertLessEqual(result.sup_norm, bound * (1 + QUADRATURE_SLACK))

    def test_exponent_must_exceed_one(self):
        zero = GridField.zeros(self.layout)
        with self.assertRaises(PreconditionError):
            compose_rhs(zero, zero, zero, zero, 1.0, COARSE_RULE, KERNEL)

    def test_nonlinear_term_sign(self):
        u = GridField(self.layout, np.linspace(-2.0, 2.0, self.layout.size))
        expected = u.values * np.abs(u.values) ** 0.5
        np.testing.assert_allclose(nonlinear_term(u, 1.5).values, expected, rtol=1e-14, atol=0)
