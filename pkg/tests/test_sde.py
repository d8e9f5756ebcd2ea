"""
Test Cases for the exponential Euler scheme and the Monte Carlo oracles
"""
import math
import unittest
import sys
import os
from unittest import mock

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from scipy.linalg import expm

from models.errors import ConfigError, ModelValidationError
from models.fields import builtin_field, builtin_scalar
from models.operator_model import build_model
from utils.collocation import TensorGrid
from utils.ou_semigroup import resolvent_l
from utils.parallel import WORKERS_ENV, batch_rng, map_batches, worker_count
from utils.quadrature import QuadratureSpec
from utils.sde import (apply_pt, check_sde_properties, closure_consistency, extrapolated_limit,
                       resolvent_n_mc, scheme_bias, simulate_mild)


def reference_model():
    return build_model({"dim": 1, "a_diag": [-1.0], "q_diag": [1.0]})


class TestSimulation(unittest.TestCase):
    """Test cases for simulate_mild and apply_pt"""

    def test_deterministic_dynamics(self):
        """Q = 0 and F = 0 leave X(t, x) = e^{tA} x"""
        model = build_model({"dim": 2, "a_matrix": [[-1.0, 0.5], [0.0, -0.5]], "q_diag": [0.0, 0.0]})
        x = np.array([1.0, -2.0])
        samples = simulate_mild(model, builtin_field("zero", 2), x, 0.7, dt=0.01, n_paths=5)
        expected = expm(0.7 * model.a_matrix) @ x
        np.testing.assert_allclose(samples, np.tile(expected, (5, 1)), rtol=1e-10, atol=1e-12)

    def test_constant_phi(self):
        estimate = apply_pt(reference_model(), builtin_field("tanh_componentwise", 1),
                            builtin_scalar("constant", 1), 0.5, np.array([0.3]), 0.01, 1000, 1)
        self.assertEqual(estimate.phi_mean, 1.0)
        self.assertEqual(estimate.std_error, 0.0)

    def test_zero_time(self):
        estimate = apply_pt(reference_model(), builtin_field("tanh_componentwise", 1),
                            builtin_scalar("cos", 1), 0.0, np.array([0.5]))
        self.assertAlmostEqual(estimate.phi_mean, math.cos(0.5), places=15)
        self.assertEqual(estimate.std_error, 0.0)

    def test_ou_law(self):
        """With F = 0, P_1 cos(0) = exp(-Q_1/2)"""
        estimate = apply_pt(reference_model(), builtin_field("zero", 1), builtin_scalar("cos", 1),
                            1.0, np.array([0.0]), 0.05, 20_000, 11)
        exact = math.exp(-(1.0 - math.exp(-2.0)) / 4.0)
        self.assertLess(abs(estimate.phi_mean - exact), 5.0 * estimate.std_error)

    def test_seed_determinism(self):
        args = (reference_model(), builtin_field("tanh_componentwise", 1), np.array([0.2]), 0.3)
        first = simulate_mild(*args, dt=0.01, n_paths=5000, seed=4)
        np.testing.assert_array_equal(first, simulate_mild(*args, dt=0.01, n_paths=5000, seed=4))
        self.assertFalse(np.array_equal(first, simulate_mild(*args, dt=0.01, n_paths=5000, seed=5)))

    def test_worker_count_independence(self):
        """Batches are seeded by counter, so threads do not change the samples"""
        args = (reference_model(), builtin_field("tanh_componentwise", 1), np.array([0.2]), 0.3)
        with mock.patch.dict(os.environ, {WORKERS_ENV: "1"}):
            serial = simulate_mild(*args, dt=0.01, n_paths=10_000, seed=2)
        with mock.patch.dict(os.environ, {WORKERS_ENV: "4"}):
            threaded = simulate_mild(*args, dt=0.01, n_paths=10_000, seed=2)
        np.testing.assert_array_equal(serial, threaded)

    def test_invalid_arguments(self):
        with self.assertRaises(ModelValidationError):
            simulate_mild(reference_model(), builtin_field("zero", 1), np.zeros(1), 1.0, dt=0.0)
        with self.assertRaises(ModelValidationError):
            simulate_mild(reference_model(), builtin_field("zero", 1), np.zeros(2), 1.0)


class TestLaplaceOracle(unittest.TestCase):
    """Test cases for resolvent_n_mc"""

    def test_constant(self):
        estimate = resolvent_n_mc(reference_model(), builtin_field("tanh_componentwise", 1),
                                  builtin_scalar("constant", 1, value=3.0), 2.0, np.array([0.0]),
                                  dt=0.01, n_paths=50, seed=0)
        self.assertAlmostEqual(estimate.value, 1.5, places=10)
        self.assertAlmostEqual(estimate.std_error, 0.0, places=12)

    def test_ou_resolvent(self):
        model = reference_model()
        cos = builtin_scalar("cos", 1)
        estimate = resolvent_n_mc(model, builtin_field("zero", 1), cos, 1.0, np.array([0.5]),
                                  dt=0.02, n_paths=4000, seed=7)
        exact = resolvent_l(model, cos, 1.0, np.array([0.5]))
        self.assertLess(abs(estimate.value - exact), 5.0 * estimate.std_error + estimate.tail_bound
                        + 1e-3)

    def test_lambda_must_be_positive(self):
        with self.assertRaises(ModelValidationError):
            resolvent_n_mc(reference_model(), builtin_field("zero", 1), builtin_scalar("cos", 1),
                           0.0, np.zeros(1))


class TestSdeChecks(unittest.TestCase):
    """Test cases for the SDE property checks and the closure study"""

    def test_mean_square_continuity(self):
        reports = check_sde_properties(reference_model(), builtin_field("tanh_componentwise", 1),
                                       builtin_scalar("cos", 1), np.zeros(1), t=0.2, dt=0.02,
                                       n_paths=4000, seed=0, nested_paths=100)
        by_id = {r.check_id: r for r in reports}
        self.assertIn("sde.markov", by_id)
        for delta in ["0.08", "0.32", "1.28"]:
            self.assertTrue(by_id[f"sde.mean_square.delta={delta}"].passed)
        markov = by_id["sde.markov"]
        self.assertLessEqual(markov.lhs, 2.0 * markov.error_budget)

    def test_closure_table(self):
        reports, table = closure_consistency(
            reference_model(), builtin_field("zero", 1), builtin_scalar("cos", 1), 1.0,
            [0.5, 0.25, 0.125], np.array([[0.0], [1.0]]),
            QuadratureSpec(nodes_per_dim=16, laplace_nodes=32, laplace_panels=4),
            tol=1e-6, dt=0.05, n_paths=2000, seed=0, grid=TensorGrid(1, 4.0, 0.1))
        self.assertEqual([r.check_id for r in reports], ["sde.closure_monotone", "sde.closure_limit"])
        self.assertEqual(table.parameter, "eps")
        self.assertEqual(len(table.errors), 3)

    def test_zero_drift_closure_passes(self):
        reports, _ = closure_consistency(
            reference_model(), builtin_field("zero", 1), builtin_scalar("cos", 1), 1.0,
            [0.5, 0.25, 0.125], np.array([[0.0], [1.0]]),
            QuadratureSpec(nodes_per_dim=16, laplace_nodes=32, laplace_panels=4),
            tol=1e-6, dt=0.05, n_paths=2000, seed=0, grid=TensorGrid(1, 4.0, 0.1))
        self.assertEqual([r.check_id for r in reports if not r.passed], [])
        self.assertEqual(reports[1].params["scheme_bias"], 0.0)

    def test_tanh_closure_passes(self):
        reports, table = closure_consistency(
            reference_model(), builtin_field("tanh_componentwise", 1), builtin_scalar("cos", 1),
            2.0, [0.4, 0.2, 0.1], np.array([[0.0], [1.0]]),
            QuadratureSpec(nodes_per_dim=16, laplace_nodes=32, laplace_panels=4),
            tol=1e-6, dt=0.02, n_paths=4000, seed=0, grid=TensorGrid(1, 4.0, 0.1))
        by_id = {r.check_id: r for r in reports}
        self.assertTrue(by_id["sde.closure_limit"].passed)
        self.assertEqual(by_id["sde.closure_limit"].params["last_distance"], table.errors[-1])

    def test_extrapolated_limit(self):
        """A first-order remainder is removed from the last distance"""
        eps = [0.4, 0.2, 0.1, 0.05]
        self.assertAlmostEqual(extrapolated_limit(eps, [0.01046, 0.00576, 0.00312, 0.00173]),
                               0.00034, places=12)
        self.assertAlmostEqual(extrapolated_limit(eps, [0.8, 0.4, 0.2, 0.1]), 0.0, places=12)
        self.assertAlmostEqual(extrapolated_limit(eps, [0.3, 0.3, 0.3, 0.3]), 0.3, places=12)
        self.assertEqual(extrapolated_limit([0.1], [0.02]), 0.02)
        self.assertEqual(extrapolated_limit(eps, [0.4, 0.1, 0.01, 0.001]), 0.0)

    def test_scheme_bias(self):
        cos = builtin_scalar("cos", 1)
        self.assertEqual(scheme_bias(builtin_field("zero", 1), cos, 2.0, 1e-3), 0.0)
        drift = builtin_field("tanh_componentwise", 1)
        expected = 1e-3 * drift.f_sup_norm * max(1.0, drift.k_const) * cos.grad_sup_norm / 2.0
        self.assertAlmostEqual(scheme_bias(drift, cos, 2.0, 1e-3), expected, places=15)
        self.assertAlmostEqual(scheme_bias(drift, cos, 2.0, 1e-2), 10.0 * expected, places=15)

    def test_closure_needs_decreasing_eps(self):
        with self.assertRaises(ModelValidationError):
            closure_consistency(reference_model(), builtin_field("zero", 1),
                                builtin_scalar("cos", 1), 1.0, [0.1, 0.2], np.zeros((1, 1)),
                                QuadratureSpec())


class TestParallel(unittest.TestCase):
    """Test cases for the batch helpers"""

    def test_worker_count_from_environment(self):
        with mock.patch.dict(os.environ, {WORKERS_ENV: "3"}):
            self.assertEqual(worker_count(), 3)
        with mock.patch.dict(os.environ, {WORKERS_ENV: "many"}):
            with self.assertRaises(ConfigError):
                worker_count()
        with mock.patch.dict(os.environ, {WORKERS_ENV: "0"}):
            with self.assertRaises(ConfigError):
                worker_count()

    def test_map_batches_keeps_order(self):
        self.assertEqual(map_batches(lambda v: v * v, range(10), workers=4),
                         [v * v for v in range(10)])

    def test_batch_rng_streams_differ(self):
        a = batch_rng(0, 0).standard_normal(4)
        np.testing.assert_array_equal(a, batch_rng(0, 0).standard_normal(4))
        self.assertFalse(np.array_equal(a, batch_rng(0, 1).standard_normal(4)))


if __name__ == "__main__":
    unittest.main()
