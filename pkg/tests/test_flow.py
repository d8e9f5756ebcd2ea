"""
Test Cases for the drift flow eta(t, x) and its Jacobian
"""
import math
import unittest
import sys
import os

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from hypothesis import given, settings, strategies as st

from models.errors import ModelValidationError
from models.fields import SupSampler, builtin_field
from utils.flow import (check_flow_estimates, check_flow_semigroup, flow_jacobian,
                        flow_jacobian_apply, flow_map, integrate_flow)


def tanh_drift(dim=1):
    return builtin_field("tanh_componentwise", dim)


class TestFlowMap(unittest.TestCase):
    """Test cases for the flow integrator"""

    def test_tanh_closed_form(self):
        """For F = tanh, sinh(eta(t,x)) = e^t sinh(x)"""
        eta = flow_map(tanh_drift(), np.array([1.0]), 1.0)
        expected = math.asinh(math.e * math.sinh(1.0))
        self.assertAlmostEqual(float(eta[0]), expected, places=8)
        self.assertAlmostEqual(expected, 1.8782, places=3)

    def test_tanh_jacobian_closed_form(self):
        """eta_x = e^t cosh(x) / cosh(eta)"""
        result = integrate_flow(tanh_drift(), np.array([1.0]), 1.0, with_jacobian=True)
        expected = math.e * math.cosh(1.0) / math.cosh(float(result.eta[0]))
        self.assertAlmostEqual(float(result.eta_x[0, 0]), expected, places=7)
        self.assertAlmostEqual(expected, 1.2531, places=3)

    def test_zero_drift_identity(self):
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        drift = builtin_field("zero", 2)
        np.testing.assert_array_equal(flow_map(drift, x, 2.0), x)
        np.testing.assert_array_equal(flow_jacobian(drift, x, 2.0), np.broadcast_to(np.eye(2), (2, 2, 2)))

    def test_zero_time(self):
        x = np.array([0.3, -0.4])
        np.testing.assert_array_equal(flow_map(tanh_drift(2), x, 0.0), x)

    def test_invalid_arguments(self):
        with self.assertRaises(ModelValidationError):
            flow_map(tanh_drift(), np.zeros(1), -1.0)
        with self.assertRaises(ModelValidationError):
            flow_map(tanh_drift(), np.zeros(1), 1.0, tol=0.0)

    def test_jacobian_apply_matches_full_jacobian(self):
        drift = builtin_field("scaled_sigmoid_rank_one", 3, scale=2.0)
        x = np.array([[0.2, -0.1, 0.7], [1.5, 0.0, -2.0]])
        h = np.array([1.0, 2.0, -1.0])
        full = flow_jacobian(drift, x, 0.8)
        np.testing.assert_allclose(flow_jacobian_apply(drift, x, 0.8, h), full @ h, atol=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(t=st.floats(0.0, 1.0), s=st.floats(0.0, 1.0), x=st.floats(-5.0, 5.0))
    def test_semigroup_law(self, t, s, x):
        drift = tanh_drift()
        x = np.array([x])
        np.testing.assert_allclose(flow_map(drift, x, t + s),
                                   flow_map(drift, flow_map(drift, x, s), t), atol=1e-8)


class TestFlowChecks(unittest.TestCase):
    """Test cases for the flow check suites"""

    def test_estimates_pass_for_builtin_drifts(self):
        sampler = SupSampler(2, radius=4.0, count=128)
        for name in ["zero", "tanh_componentwise", "scaled_sigmoid_rank_one", "smooth_bump"]:
            reports = check_flow_estimates(builtin_field(name, 2), sampler, [0.5, 1.0], 1e-9)
            failed = [r.check_id for r in reports if r.blocking_failure]
            self.assertEqual(failed, [], name)

    def test_understated_k_fails_jacobian_bound(self):
        drift = tanh_drift().with_constants(k_const=0.5)
        reports = check_flow_estimates(drift, SupSampler(1, count=128), [1.0], 1e-9)
        by_id = {r.check_id: r for r in reports}
        self.assertFalse(by_id["flow.jacobian_bound.t=1"].passed)

    def test_per_sample_reports(self):
        sampler = SupSampler(1, count=16)
        reports = check_flow_estimates(tanh_drift(), sampler, [0.5], 1e-9, per_sample=True)
        lipschitz = [r for r in reports if r.check_id.startswith("flow.lipschitz.")]
        self.assertEqual(len(lipschitz), 16)

    def test_no_times_is_vacuous(self):
        self.assertEqual(check_flow_estimates(tanh_drift(), SupSampler(1, count=8), []), [])

    def test_semigroup_checks_pass(self):
        reports = check_flow_semigroup(tanh_drift(2), SupSampler(2, radius=4.0, count=64), 1e-9)
        self.assertEqual([r.check_id for r in reports], ["flow.semigroup_law", "flow.chain_rule"])
        self.assertTrue(all(r.passed for r in reports))


if __name__ == "__main__":
    unittest.main()
