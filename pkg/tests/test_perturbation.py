"""
Test Cases for the flow quotient F_eps, the operator T_lambda and the
fixed point phi_eps = R(lambda, N_eps) f
"""
import math
import unittest
import sys
import os

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from models.errors import ModelValidationError
from models.fields import SupSampler, builtin_field, builtin_scalar
from models.operator_model import build_model
from utils.collocation import TensorGrid
from utils.ou_semigroup import apply_l, resolvent_l
from utils.perturbation import (apply_fcal, apply_feps, apply_neps, apply_tlambda,
                                check_feps_convergence, check_solution, check_tlambda_contraction,
                                gradient_constant, gradient_threshold, max_iterations,
                                solve_resolvent_neps, tlambda_rule)
from utils.quadrature import QuadratureSpec

SMALL_QUAD = QuadratureSpec(nodes_per_dim=16, laplace_nodes=32, laplace_panels=4)


def reference_model():
    return build_model({"dim": 1, "a_diag": [-1.0], "q_diag": [1.0]})


class TestConstants(unittest.TestCase):
    """Test cases for thresholds and iteration budgets"""

    def test_max_iterations(self):
        self.assertEqual(max_iterations(1e-6, 1.0, 2.0, 0.1), 81)
        self.assertEqual(max_iterations(1e-6, 1e-7, 2.0, 0.1), 5)

    def test_gradient_threshold(self):
        model = reference_model()
        drift = builtin_field("tanh_componentwise", 1)
        threshold = gradient_threshold(model, drift, 0.1)
        self.assertAlmostEqual(threshold, -1.0 + math.expm1(0.1) / 0.1, places=14)
        self.assertIsNone(gradient_constant(model, drift, threshold / 2, 0.1))
        self.assertAlmostEqual(gradient_constant(model, drift, 2.0, 0.1), 1.0 / (2.0 - threshold))


class TestFlowQuotient(unittest.TestCase):
    """Test cases for F and F_eps"""

    def test_fcal_closed_form(self):
        value = apply_fcal(builtin_scalar("sin", 1), builtin_field("tanh_componentwise", 1),
                           np.array([1.0]))
        self.assertAlmostEqual(value, math.cos(1.0) * math.tanh(1.0), places=12)

    def test_constant_phi_has_zero_quotient(self):
        x = np.linspace(-3.0, 3.0, 7)[:, None]
        values = apply_feps(builtin_scalar("constant", 1, value=2.0),
                            builtin_field("tanh_componentwise", 1), 0.1, x)
        np.testing.assert_array_equal(values, np.zeros(7))

    def test_zero_drift(self):
        x = np.array([[0.3], [1.0]])
        np.testing.assert_array_equal(
            apply_feps(builtin_scalar("cos", 1), builtin_field("zero", 1), 0.1, x), np.zeros(2))

    def test_quotient_approaches_fcal(self):
        phi = builtin_scalar("sin", 1)
        drift = builtin_field("tanh_componentwise", 1)
        x = np.array([1.0])
        self.assertAlmostEqual(apply_feps(phi, drift, 1e-4, x), apply_fcal(phi, drift, x), places=3)

    def test_convergence_checks_pass(self):
        reports = check_feps_convergence(builtin_scalar("sin", 1),
                                         builtin_field("tanh_componentwise", 1),
                                         [0.1, 0.01, 0.001], SupSampler(1, count=256))
        self.assertEqual(len(reports), 4)
        self.assertEqual([r.check_id for r in reports if not r.passed], [])

    def test_neps_is_generator_plus_quotient(self):
        model = reference_model()
        cos = builtin_scalar("cos", 1)
        drift = builtin_field("tanh_componentwise", 1)
        x = np.array([[0.0], [0.7], [-1.5]])
        np.testing.assert_allclose(apply_neps(model, cos, builtin_field("zero", 1), 0.1, x),
                                   apply_l(model, cos, x), atol=1e-14)
        np.testing.assert_allclose(apply_neps(model, cos, drift, 0.1, x),
                                   apply_l(model, cos, x) + apply_feps(cos, drift, 0.1, x),
                                   atol=1e-14)

    def test_eps_list_must_decrease(self):
        with self.assertRaises(ModelValidationError):
            check_feps_convergence(builtin_scalar("sin", 1), builtin_field("zero", 1),
                                   [0.01, 0.1], SupSampler(1, count=16))


class TestTLambda(unittest.TestCase):
    """Test cases for T_lambda"""

    def test_rule_weights_sum(self):
        rule = tlambda_rule(reference_model(), 2.0, 0.1, SMALL_QUAD)
        self.assertAlmostEqual(float(np.sum(rule.weights)), 1.0 / 1.2, places=12)

    def test_constant_image(self):
        """T_lambda 1 = 1/(1 + lambda eps)"""
        x = np.array([[0.0], [2.5], [-1.0]])
        values = apply_tlambda(reference_model(), builtin_field("tanh_componentwise", 1), 2.0, 0.1,
                               builtin_scalar("constant", 1), x, SMALL_QUAD)
        np.testing.assert_allclose(values, np.full(3, 1.0 / 1.2), atol=1e-12)

    def test_invalid_parameters(self):
        with self.assertRaises(ModelValidationError):
            tlambda_rule(reference_model(), 0.0, 0.1)
        with self.assertRaises(ModelValidationError):
            tlambda_rule(reference_model(), 1.0, -0.1)

    def test_contraction_checks_pass(self):
        reports = check_tlambda_contraction(reference_model(), builtin_field("tanh_componentwise", 1),
                                            [1.0], [0.1, 0.5], SupSampler(1, count=32),
                                            SMALL_QUAD, pairs=4)
        blocking = [r for r in reports if not r.informational]
        self.assertEqual(len(blocking), 2)
        self.assertTrue(all(r.passed for r in blocking))


class TestFixedPoint(unittest.TestCase):
    """Test cases for the resolvent fixed point solver"""

    def test_constant_f(self):
        """f = 1 gives phi_eps = 1/lambda"""
        solution = solve_resolvent_neps(reference_model(), builtin_field("tanh_componentwise", 1),
                                        1.0, 0.5, builtin_scalar("constant", 1), SMALL_QUAD,
                                        1e-12, TensorGrid(1, 4.0, 0.5))
        np.testing.assert_allclose(solution.grid_values, np.ones(17), atol=1e-10)
        x = np.array([[0.13], [-3.3]])
        np.testing.assert_allclose(solution.phi_eps.value(x), np.ones(2), atol=1e-10)
        self.assertLessEqual(solution.residual_sup, 1e-12)

    def test_observed_ratio_below_contraction(self):
        lam, eps = 1.0, 0.2
        solution = solve_resolvent_neps(reference_model(), builtin_field("tanh_componentwise", 1),
                                        lam, eps, builtin_scalar("cos", 1), SMALL_QUAD, 1e-8,
                                        TensorGrid(1, 4.0, 0.25))
        self.assertLessEqual(solution.contraction_ratio_observed, 1.0 / (1.0 + lam * eps) + 1e-3)
        self.assertLessEqual(solution.iterations, max_iterations(1e-8, 1.0, lam, eps))
        self.assertEqual(len(solution.trace), solution.iterations)
        self.assertLess(solution.trace[-1], 1e-8)

    def test_zero_drift_matches_ou_resolvent(self):
        model = reference_model()
        cos = builtin_scalar("cos", 1)
        quad = QuadratureSpec(nodes_per_dim=24, laplace_nodes=64, laplace_panels=8)
        solution = solve_resolvent_neps(model, builtin_field("zero", 1), 1.0, 0.5, cos, quad,
                                        1e-8, TensorGrid(1, 8.0, 0.02))
        x = np.linspace(-2.0, 2.0, 9)[:, None]
        np.testing.assert_allclose(solution.phi_eps.value(x), resolvent_l(model, cos, 1.0, x),
                                   atol=2e-4)

    def test_solution_checks_pass_for_constant_f(self):
        solution = solve_resolvent_neps(reference_model(), builtin_field("tanh_componentwise", 1),
                                        2.0, 0.1, builtin_scalar("constant", 1), SMALL_QUAD,
                                        1e-10, TensorGrid(1, 4.0, 0.25))
        reports = check_solution(reference_model(), solution, SupSampler(1, count=16), 16)
        ids = [r.check_id for r in reports]
        self.assertIn("perturbation.gradient_bound.lambda=2,eps=0.1", ids)
        self.assertIn("perturbation.n0_residual.lambda=2,eps=0.1", ids)
        self.assertEqual([r.check_id for r in reports if r.blocking_failure], [])

    def test_residual_identity_holds_for_converged_cos(self):
        lam, eps = 2.0, 0.1
        solution = solve_resolvent_neps(reference_model(), builtin_field("tanh_componentwise", 1),
                                        lam, eps, builtin_scalar("cos", 1), SMALL_QUAD, 1e-8,
                                        TensorGrid(1, 6.0, 0.02))
        reports = check_solution(reference_model(), solution, SupSampler(1, count=16), 16)
        by_id = {r.check_id: r for r in reports}
        self.assertTrue(by_id["perturbation.residual_identity.lambda=2,eps=0.1"].passed)
        self.assertTrue(by_id["perturbation.gradient_bound.lambda=2,eps=0.1"].passed)

    def test_residual_identity_rejects_unconverged_solution(self):
        """One Picard step is far from the fixed point and must not pass"""
        lam, eps = 2.0, 0.1
        solution = solve_resolvent_neps(reference_model(), builtin_field("tanh_componentwise", 1),
                                        lam, eps, builtin_scalar("cos", 1), SMALL_QUAD, 0.5,
                                        TensorGrid(1, 6.0, 0.02))
        self.assertEqual(solution.iterations, 1)
        reports = check_solution(reference_model(), solution, SupSampler(1, count=16), 16)
        by_id = {r.check_id: r for r in reports}
        identity = by_id["perturbation.residual_identity.lambda=2,eps=0.1"]
        self.assertFalse(identity.passed)
        self.assertLess(identity.error_budget, 0.05)

    def test_dissipativity_grid(self):
        """lambda ||R(lambda, N_eps) f|| <= ||f|| over lambda in {1, 2, 5}, eps in {0.5, 0.1, 0.02}"""
        model = reference_model()
        drift = builtin_field("tanh_componentwise", 1)
        cos = builtin_scalar("cos", 1)
        grid = TensorGrid(1, 4.0, 0.1)
        sampler = SupSampler(1, count=64)
        for lam in [1.0, 2.0, 5.0]:
            for eps in [0.5, 0.1, 0.02]:
                solution = solve_resolvent_neps(model, drift, lam, eps, cos, SMALL_QUAD, 1e-6, grid)
                self.assertLessEqual(float(np.max(np.abs(solution.grid_values))),
                                     cos.sup_norm / lam + 1e-12)
                reports = check_solution(model, solution, sampler, 64)
                by_id = {r.check_id: r for r in reports}
                tag = f"lambda={lam:g},eps={eps:g}"
                self.assertTrue(by_id[f"perturbation.dissipativity.{tag}"].passed, tag)
                self.assertTrue(by_id[f"perturbation.solution.sup_bound.{tag}"].passed, tag)

    def test_grid_dimension_mismatch(self):
        with self.assertRaises(ModelValidationError):
            solve_resolvent_neps(reference_model(), builtin_field("zero", 1), 1.0, 0.5,
                                 builtin_scalar("cos", 1), SMALL_QUAD, 1e-6, TensorGrid(2, 1.0, 0.5))

    def test_serialization(self):
        solution = solve_resolvent_neps(reference_model(), builtin_field("zero", 1), 1.0, 0.5,
                                        builtin_scalar("constant", 1), SMALL_QUAD, 1e-8,
                                        TensorGrid(1, 2.0, 0.5))
        data = solution.to_dict()
        self.assertEqual(len(data["nodes"]), len(data["values"]))
        self.assertEqual(data["iterations"], len(data["trace"]))


if __name__ == "__main__":
    unittest.main()
