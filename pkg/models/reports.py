"""
Report records - one verified inequality, one convergence table, one estimate
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.errors import ModelValidationError, raise_if_invalid


@dataclass(frozen=True)
class Estimate:
    """Numerical value with its standard error (zero for deterministic quadrature)"""
    value: float
    std_error: float = 0.0


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one checked inequality lhs <= rhs"""
    check_id: str
    reference: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    error_budget: float
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    sampler: Dict[str, Any] = field(default_factory=dict)
    informational: bool = False

    @staticmethod
    def evaluate(check_id: str, reference: str, lhs: float, rhs: float,
                 error_budget: float = 0.0, params: Dict[str, Any] = None,
                 seed: Optional[int] = None, sampler: Dict[str, Any] = None,
                 informational: bool = False) -> "CheckReport":
        """Build a report from lhs and rhs; pass iff rhs - lhs >= -error_budget"""
        lhs = float(lhs)
        rhs = float(rhs)
        error_budget = abs(float(error_budget))
        margin = rhs - lhs
        passed = bool(np.isfinite(margin) and margin >= -error_budget)
        return CheckReport(
            check_id=check_id,
            reference=reference,
            lhs=lhs,
            rhs=rhs,
            margin=margin,
            passed=passed,
            error_budget=error_budget,
            params=dict(params or {}),
            seed=seed,
            sampler=dict(sampler or {}),
            informational=informational,
        )

    @property
    def blocking_failure(self) -> bool:
        """True when the report failed and is not informational"""
        return not self.passed and not self.informational

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check_id": self.check_id,
            "reference": self.reference,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "error_budget": self.error_budget,
            "seed": self.seed,
            "sampler": self.sampler,
            "informational": self.informational,
        }


def worst_case(check_id: str, reference: str, lhs: np.ndarray, rhs: np.ndarray,
               error_budget, **kwargs) -> CheckReport:
    """Collapse sampled lhs/rhs pairs into the report of the smallest relative margin"""
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    budget = np.broadcast_to(np.asarray(error_budget, dtype=float), lhs.shape)
    scale = np.maximum(budget, 1e-300)
    index = int(np.argmin((rhs - lhs) / scale))
    params = dict(kwargs.pop("params", {}) or {})
    params.update({"worst_index": index, "n_samples": int(lhs.size)})
    return CheckReport.evaluate(check_id, reference, lhs[index], rhs[index],
                                budget[index], params=params, **kwargs)


@dataclass(frozen=True)
class ConvergenceTable:
    """Errors of one study against a monotone parameter sweep"""
    parameter: str
    values: Tuple[float, ...]
    errors: Tuple[float, ...]
    fitted_rate: Optional[float]
    notes: str = ""

    @staticmethod
    def validate_table_data(values: List[float], errors: List[float]) -> tuple:
        """Validate a sweep before fitting"""
        errors_found = []
        if len(values) != len(errors):
            errors_found.append("values and errors must have the same length")
        if len(values) < 3:
            errors_found.append("a convergence study needs at least 3 parameter values")
        diffs = np.diff(np.asarray(values, dtype=float))
        if len(values) >= 2 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            errors_found.append("parameter values must be strictly monotone")
        if not all(math.isfinite(e) for e in errors):
            errors_found.append("errors must be finite")
        return len(errors_found) == 0, errors_found

    @staticmethod
    def fit(parameter: str, values: List[float], errors: List[float],
            notes: str = "") -> "ConvergenceTable":
        """Least-squares slope of log(error) against log(value)"""
        is_valid, problems = ConvergenceTable.validate_table_data(values, errors)
        raise_if_invalid(is_valid, problems, ModelValidationError)
        err = np.asarray(errors, dtype=float)
        rate = None
        if np.any(err <= 0.0):
            notes = (notes + "; " if notes else "") + "degenerate (zero) errors, rate undefined"
        else:
            slope, _ = np.polyfit(np.log(np.asarray(values, dtype=float)), np.log(err), 1)
            rate = float(slope)
        return ConvergenceTable(parameter, tuple(float(v) for v in values),
                                tuple(float(e) for e in errors), rate, notes)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({self.parameter: list(self.values), "error": list(self.errors)})
