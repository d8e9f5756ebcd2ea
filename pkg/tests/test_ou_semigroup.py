"""
Test Cases for the Ornstein-Uhlenbeck semigroup, generator and resolvent
"""
import math
import unittest
import sys
import os

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from scipy import integrate

from models.errors import ModelValidationError
from models.fields import ScalarField, SupSampler, builtin_scalar
from models.operator_model import build_model
from utils.ou_semigroup import (apply_drt, apply_l, apply_rt, check_ou_estimates, estimate_rt,
                                fd_generator, generator_difference_quotient, resolvent_estimate,
                                resolvent_gradient_l, resolvent_l)
from utils.quadrature import QuadratureSpec, laplace_rule


def reference_model():
    return build_model({"dim": 1, "a_diag": [-1.0], "q_diag": [1.0]})


def q_t(t):
    return (1.0 - math.exp(-2.0 * t)) / 2.0


class TestSemigroup(unittest.TestCase):
    """Test cases for R_t"""

    def setUp(self):
        self.model = reference_model()
        self.cos = builtin_scalar("cos", 1)

    def test_cos_at_origin(self):
        """R_1 cos(0) = exp(-Q_1 / 2)"""
        value = apply_rt(self.model, self.cos, 1.0, np.array([0.0]))
        self.assertAlmostEqual(value, math.exp(-q_t(1.0) / 2.0), places=8)
        self.assertAlmostEqual(q_t(1.0), 0.80560, places=5)

    def test_cos_off_origin(self):
        """R_t cos(x) = cos(e^{-t} x) exp(-Q_t / 2)"""
        x = np.array([[0.5], [-2.0], [3.0]])
        t = 0.7
        expected = np.cos(math.exp(-t) * x[:, 0]) * math.exp(-q_t(t) / 2.0)
        np.testing.assert_allclose(apply_rt(self.model, self.cos, t, x), expected, atol=1e-10)

    def test_gradient(self):
        """D R_t cos(x) = -e^{-t} sin(e^{-t} x) exp(-Q_t / 2)"""
        t, x = 0.4, 1.3
        expected = -math.exp(-t) * math.sin(math.exp(-t) * x) * math.exp(-q_t(t) / 2.0)
        self.assertAlmostEqual(float(apply_drt(self.model, self.cos, t, np.array([x]))[0]),
                               expected, places=10)

    def test_zero_time_is_identity(self):
        x = np.array([[0.1], [1.7]])
        np.testing.assert_allclose(apply_rt(self.model, self.cos, 0.0, x), np.cos(x[:, 0]),
                                   atol=1e-14)

    def test_tensor_estimate_has_no_standard_error(self):
        estimate = estimate_rt(self.model, self.cos, 1.0, np.array([0.0]))
        self.assertEqual(estimate.std_error, 0.0)

    def test_mc_estimate(self):
        quad = QuadratureSpec(mode="mc", mc_count=20_000, seed=3)
        estimate = estimate_rt(self.model, self.cos, 1.0, np.array([0.0]), quad)
        self.assertGreater(estimate.std_error, 0.0)
        self.assertLess(abs(estimate.value - math.exp(-q_t(1.0) / 2.0)), 5 * estimate.std_error)

    def test_negative_time_rejected(self):
        with self.assertRaises(ModelValidationError):
            apply_rt(self.model, self.cos, -0.1, np.zeros(1))


class TestGenerator(unittest.TestCase):
    """Test cases for L"""

    def test_kolmogorov_form(self):
        """L cos(1) = -cos(1)/2 + sin(1)"""
        value = apply_l(reference_model(), builtin_scalar("cos", 1), np.array([1.0]))
        self.assertAlmostEqual(value, -math.cos(1.0) / 2.0 + math.sin(1.0), places=12)
        self.assertAlmostEqual(value, 0.57132, places=5)

    def test_difference_quotient_converges(self):
        model = reference_model()
        cos = builtin_scalar("cos", 1)
        x = np.array([[0.0], [0.5], [1.0]])
        np.testing.assert_allclose(generator_difference_quotient(model, cos, x, 1e-3),
                                   apply_l(model, cos, x), atol=1e-5)

    def test_fd_hessian(self):
        """Without a Hessian oracle the finite-difference path must be requested"""
        cos = builtin_scalar("cos", 1)
        no_hessian = ScalarField(value=cos.value, sup_norm=1.0, gradient=cos.gradient, name="cos")
        model = reference_model()
        with self.assertRaises(ModelValidationError):
            apply_l(model, no_hessian, np.array([1.0]))
        self.assertAlmostEqual(apply_l(model, no_hessian, np.array([1.0]), fd_hessian=True),
                               apply_l(model, cos, np.array([1.0])), places=6)


    def test_fd_generator_ignores_oracles(self):
        """Differences of values alone reproduce L cos with an O(h^2) error estimate"""
        model = reference_model()
        cos = builtin_scalar("cos", 1)
        x = np.array([[0.0], [1.0], [-2.0]])
        values, error = fd_generator(model, cos, x, 0.04)
        exact = apply_l(model, cos, x)
        np.testing.assert_allclose(values, exact, atol=1e-3)
        self.assertTrue(np.all(np.abs(values - exact) <= 2.0 * error + 1e-12))
        with self.assertRaises(ModelValidationError):
            fd_generator(model, cos, x, 0.0)


class TestResolvent(unittest.TestCase):
    """Test cases for R(lambda, L)"""

    def test_constant(self):
        model = reference_model()
        value = resolvent_l(model, builtin_scalar("constant", 1, value=3.0), 2.0, np.array([0.4]))
        self.assertAlmostEqual(value, 1.5, places=12)

    def test_cos_against_laplace_integral(self):
        lam = 1.5
        exact, _ = integrate.quad(lambda t: math.exp(-lam * t) * math.exp(-q_t(t) / 2.0),
                                  0.0, np.inf, epsabs=1e-13)
        value = resolvent_l(reference_model(), builtin_scalar("cos", 1), lam, np.array([0.0]))
        self.assertAlmostEqual(value, exact, places=8)

    def test_gradient_bound(self):
        model = reference_model()
        x = np.linspace(-3.0, 3.0, 13)[:, None]
        grads = resolvent_gradient_l(model, builtin_scalar("sin", 1), 1.0, x)
        self.assertLessEqual(float(np.max(np.abs(grads))), 1.0 / (1.0 - model.omega) + 1e-9)

    def test_gradient_tail_near_omega(self):
        """The gradient tail decays at lambda - omega, not at lambda"""
        model = build_model({"dim": 1, "a_diag": [0.5], "q_diag": [1.0]})
        sin = builtin_scalar("sin", 1)
        lam = 0.6
        quad = QuadratureSpec(nodes_per_dim=16, laplace_nodes=32, laplace_panels=4)
        _, budget = resolvent_estimate(model, sin, lam, np.zeros((1, 1)), quad, gradient=True)
        t_max = laplace_rule(lam, quad).t_max
        gap = lam - model.omega
        self.assertGreaterEqual(float(np.min(budget)),
                                math.exp(-gap * t_max) / gap * sin.grad_sup_norm)

    def test_lambda_below_omega_rejected(self):
        model = build_model({"dim": 1, "a_diag": [0.5], "q_diag": [1.0]})
        with self.assertRaises(ModelValidationError):
            resolvent_l(model, builtin_scalar("cos", 1), 0.25, np.zeros(1))
        with self.assertRaises(ModelValidationError):
            resolvent_l(reference_model(), builtin_scalar("cos", 1), 0.0, np.zeros(1))

    def test_check_suite_passes(self):
        reports = check_ou_estimates(reference_model(), builtin_scalar("cos", 1),
                                     SupSampler(1, count=32), times=[0.5, 1.0], lambdas=[1.0, 2.0])
        ids = {r.check_id for r in reports}
        self.assertIn("ou.semigroup_law", ids)
        self.assertIn("ou.generator", ids)
        self.assertEqual([r.check_id for r in reports if not r.passed], [])


if __name__ == "__main__":
    unittest.main()
