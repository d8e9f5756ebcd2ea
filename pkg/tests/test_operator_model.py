"""
Test Cases for the operator model
Semigroup, covariance and Gaussian law of the linear part
"""
import math
import unittest
import sys
import os

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from models.errors import ModelValidationError
from models.operator_model import (OperatorModel, build_model, check_model_invariants,
                                   covariance_at, integrated_semigroup, sample_gaussian,
                                   semigroup_apply)


def reference_model():
    return build_model({"dim": 1, "a_diag": [-1.0], "q_diag": [1.0]})


class TestModelValidation(unittest.TestCase):
    """Test cases for model construction"""

    def test_validate_model_data(self):
        """Shapes and PSD covariance are validated"""
        valid, errors = OperatorModel.validate_model_data(1, np.array([[-1.0]]), np.array([[1.0]]))
        self.assertTrue(valid)
        self.assertEqual(len(errors), 0)

        valid, errors = OperatorModel.validate_model_data(2, np.eye(2), np.eye(3))
        self.assertFalse(valid)
        self.assertGreater(len(errors), 0)

        valid, errors = OperatorModel.validate_model_data(1, np.array([[-1.0]]), np.array([[-1.0]]))
        self.assertFalse(valid)

    def test_diagonal_defaults(self):
        """Diagonal A gets omega = max eigenvalue"""
        model = reference_model()
        self.assertTrue(model.diagonal)
        self.assertEqual(model.omega, -1.0)

    def test_omega_below_growth_rejected(self):
        with self.assertRaises(ModelValidationError):
            build_model({"dim": 2, "a_diag": [-1.0, 0.5], "q_diag": [1.0, 1.0], "omega": 0.0})

    def test_missing_generator_rejected(self):
        with self.assertRaises(ModelValidationError):
            build_model({"dim": 1, "q_diag": [1.0]})

    def test_dense_omega_bounds_semigroup(self):
        """Dense A: the default omega dominates ||e^{tA}||"""
        model = build_model({"dim": 2, "a_matrix": [[-1.0, 1.0], [0.0, -1.0]],
                             "q_diag": [1.0, 1.0]})
        self.assertFalse(model.diagonal)
        for t in [0.1, 1.0, 3.0]:
            norm = np.linalg.norm(expm(t * model.a_matrix), 2)
            self.assertLessEqual(norm, math.exp(model.omega * t) * (1 + 1e-9))


class TestCovariance(unittest.TestCase):
    """Test cases for Q_t and the integrated semigroup"""

    def test_closed_form_1d(self):
        """Q_1 = (1 - e^{-2})/2 for A = -1, Q = 1"""
        cov = covariance_at(reference_model(), 1.0).covariance
        self.assertAlmostEqual(cov[0, 0], (1 - math.exp(-2.0)) / 2, places=12)

    def test_zero_time(self):
        self.assertTrue(np.all(covariance_at(reference_model(), 0.0).covariance == 0.0))

    def test_dense_lyapunov_identity(self):
        """A Q_t + Q_t A^T = e^{tA} Q e^{tA^T} - Q"""
        model = build_model({"dim": 2, "a_matrix": [[-1.0, 0.5], [-0.5, -2.0]],
                             "q_matrix": [[1.0, 0.2], [0.2, 0.5]]})
        t = 0.7
        q_t = covariance_at(model, t).covariance
        e_ta = expm(t * model.a_matrix)
        lhs = model.a_matrix @ q_t + q_t @ model.a_matrix.T
        rhs = e_ta @ model.q_matrix @ e_ta.T - model.q_matrix
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_integrated_semigroup_zero_rate(self):
        """int_0^t e^{0 s} ds = t"""
        model = build_model({"dim": 1, "a_diag": [0.0], "q_diag": [1.0]})
        self.assertAlmostEqual(integrated_semigroup(model, 0.3)[0, 0], 0.3, places=14)

    def test_integrated_semigroup_dense_matches_diagonal(self):
        diag = build_model({"dim": 2, "a_diag": [-1.0, -2.0], "q_diag": [1.0, 1.0]})
        dense = OperatorModel(2, diag.a_matrix, diag.q_matrix, diag.omega, False)
        np.testing.assert_allclose(integrated_semigroup(dense, 0.8),
                                   integrated_semigroup(diag, 0.8), atol=1e-10)


class TestSemigroup(unittest.TestCase):
    """Test cases for e^{tA} and the Gaussian law"""

    @settings(max_examples=25, deadline=None)
    @given(t=st.floats(0.0, 3.0), s=st.floats(0.0, 3.0),
           x=st.lists(st.floats(-10, 10), min_size=2, max_size=2))
    def test_semigroup_law(self, t, s, x):
        model = build_model({"dim": 2, "a_diag": [-1.0, -0.5], "q_diag": [1.0, 1.0]})
        x = np.array(x)
        np.testing.assert_allclose(semigroup_apply(model, t + s, x),
                                   semigroup_apply(model, t, semigroup_apply(model, s, x)),
                                   atol=1e-12)

    def test_negative_time_rejected(self):
        with self.assertRaises(ModelValidationError):
            semigroup_apply(reference_model(), -1.0, np.zeros(1))

    def test_sample_gaussian_deterministic(self):
        law = covariance_at(reference_model(), 1.0)
        first = sample_gaussian(law, 100, seed=7)
        np.testing.assert_array_equal(first, sample_gaussian(law, 100, seed=7))
        self.assertFalse(np.array_equal(first, sample_gaussian(law, 100, seed=8)))

    def test_model_invariants_pass(self):
        for model in [reference_model(),
                      build_model({"dim": 2, "a_matrix": [[-1.0, 1.0], [0.0, -1.0]],
                                   "q_diag": [1.0, 0.5]})]:
            reports = check_model_invariants(model, [0.1, 0.5, 1.0])
            failed = [r.check_id for r in reports if not r.passed]
            self.assertEqual(failed, [])


if __name__ == "__main__":
    unittest.main()
