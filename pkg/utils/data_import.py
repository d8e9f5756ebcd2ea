"""
Configuration Import Utilities
Reading, validating and materializing TOML verification configs
"""
import copy
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from models.errors import ConfigError, VerificationError
from models.fields import ScalarField, SupSampler, VectorField, builtin_field, builtin_scalar
from models.operator_model import OperatorModel, build_model
from utils.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = ["model", "drift", "phi"]

CONFIG_REQUIREMENTS = {
    "model": {
        "required_keys": ["dim"],
        "optional_keys": ["a_diag", "a_matrix", "q_diag", "q_matrix", "omega"],
        "description": "Linear part: generator A, covariance Q and growth type omega",
        "format": {
            "dim": "Positive integer (required)",
            "a_diag": "List of dim reals, diagonal of A",
            "a_matrix": "dim x dim list of lists, dense A",
            "q_diag": "List of dim nonnegative reals, diagonal of Q",
            "q_matrix": "dim x dim symmetric PSD list of lists",
            "omega": "Real, growth type with |e^{tA}| <= e^{omega t}",
        },
    },
    "drift": {
        "required_keys": ["name"],
        "optional_keys": ["scale", "v", "w"],
        "description": "Builtin nonlinear drift F",
        "format": {
            "name": "zero, tanh_componentwise, scaled_sigmoid_rank_one or smooth_bump",
            "scale": "Nonnegative real (default 1)",
            "v": "Direction of the rank-one drifts",
            "w": "Inner direction of scaled_sigmoid_rank_one",
        },
    },
    "phi": {
        "required_keys": ["kind"],
        "optional_keys": ["dirs", "value", "radius", "shift", "amplitude"],
        "description": "Builtin cylindrical test function, also used as f for resolvents",
        "format": {
            "kind": "constant, cos, sin, gauss_bump, soft_linear or cos_mean",
            "dirs": "Orthonormal directions (list of lists)",
        },
    },
    "sup_sampler": {
        "required_keys": [],
        "optional_keys": ["radius", "count", "seed"],
        "description": "Low-discrepancy ball sampler standing in for sup norms",
        "format": {},
    },
    "quadrature": {
        "required_keys": [],
        "optional_keys": ["mode", "nodes_per_dim", "mc_count", "seed", "laplace_tmax",
                          "laplace_nodes", "laplace_panels", "max_tensor_nodes"],
        "description": "Gaussian and Laplace quadrature",
        "format": {"mode": "tensor or mc"},
    },
    "flow": {
        "required_keys": [],
        "optional_keys": ["times", "tol", "per_sample"],
        "description": "Drift flow estimates",
        "format": {},
    },
    "ou": {
        "required_keys": [],
        "optional_keys": ["times", "lambdas"],
        "description": "Ornstein-Uhlenbeck semigroup and resolvent estimates",
        "format": {},
    },
    "perturbation": {
        "required_keys": [],
        "optional_keys": ["eps_list", "lambdas", "contraction_eps", "solver_lambdas",
                          "solver_eps", "tol", "grid_step", "grid_radius", "contraction_pairs",
                          "check_points"],
        "description": "Flow quotient, T_lambda and the resolvent fixed point",
        "format": {},
    },
    "sde": {
        "required_keys": [],
        "optional_keys": ["enabled", "t", "dt", "paths", "seed", "lambda", "grid", "eps_list",
                          "nested_paths", "closure"],
        "description": "Monte Carlo oracle from the mild SDE solution",
        "format": {},
    },
}

REFERENCE_CONFIG = {
    "model": {"dim": 1, "a_diag": [-1.0], "q_diag": [1.0]},
    "drift": {"name": "tanh_componentwise", "scale": 1.0},
    "phi": {"kind": "cos"},
    "sup_sampler": {"radius": 8.0, "count": 1024, "seed": 0},
    "quadrature": {"mode": "tensor", "nodes_per_dim": 48, "laplace_nodes": 64},
    "flow": {"times": [0.1, 0.5, 1.0], "tol": 1e-10},
    "ou": {"times": [0.1, 0.5, 1.0], "lambdas": [1.0, 2.0, 5.0]},
    "perturbation": {
        "eps_list": [0.4, 0.2, 0.1, 0.05, 0.025],
        "lambdas": [1.0, 2.0, 5.0],
        "contraction_eps": [0.5, 0.1],
        "solver_lambdas": [1.0, 2.0, 5.0],
        "solver_eps": [0.5, 0.1, 0.02],
        "tol": 1e-6,
        "grid_step": 0.01,
        "grid_radius": 8.0,
        "contraction_pairs": 20,
        "check_points": 32,
    },
    "sde": {"enabled": True, "t": 0.5, "dt": 1e-3, "paths": 100_000, "seed": 0,
            "lambda": 2.0, "grid": 9, "eps_list": [0.4, 0.2, 0.1, 0.05],
            "nested_paths": 200, "closure": True},
}

_POSITION = re.compile(r"line (\d+), column (\d+)")


def get_config_requirements(section: str = None) -> Dict[str, Any]:
    """
    Get key requirements for one config section, or all of them

    Args:
        section (str): Section name such as 'model'

    Returns:
        dict: Requirements information
    """
    if section is None:
        return CONFIG_REQUIREMENTS
    return CONFIG_REQUIREMENTS.get(section, {})


def read_config(path) -> Dict[str, Any]:
    """
    Read a TOML config file

    Raises:
        ConfigError: unreadable file or TOML syntax error (with line and column)
    """
    path = Path(path)
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        column = getattr(e, "colno", None)
        if line is None:
            match = _POSITION.search(str(e))
            if match:
                line, column = int(match.group(1)), int(match.group(2))
        raise ConfigError(f"{path}: {e}", line, column) from e
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def validate_config_structure(config: Dict[str, Any]) -> tuple:
    """
    Validate config sections and keys against CONFIG_REQUIREMENTS

    Returns:
        tuple: (is_valid, errors, warnings)
    """
    errors = []
    warnings = []

    if not isinstance(config, dict):
        return False, ["config must be a table of sections"], warnings

    missing_sections = [s for s in REQUIRED_SECTIONS if s not in config]
    if missing_sections:
        errors.append(f"Missing required sections: {', '.join(missing_sections)}")

    for section, body in config.items():
        requirements = get_config_requirements(section)
        if not requirements:
            warnings.append(f"Unknown section [{section}] (will be ignored)")
            continue
        if not isinstance(body, dict):
            errors.append(f"[{section}] must be a table")
            continue
        missing_keys = [k for k in requirements["required_keys"] if k not in body]
        if missing_keys:
            errors.append(f"[{section}] missing required keys: {', '.join(missing_keys)}")
        expected = requirements["required_keys"] + requirements["optional_keys"]
        extra_keys = [k for k in body if k not in expected]
        if extra_keys:
            warnings.append(f"[{section}] unknown keys (will be ignored): {', '.join(extra_keys)}")

    return len(errors) == 0, errors, warnings


def merge_with_reference(config: Dict[str, Any]) -> Dict[str, Any]:
    """Fill optional sections and keys from the 1-D reference config"""
    merged = copy.deepcopy(config)
    for section, defaults in REFERENCE_CONFIG.items():
        if section in REQUIRED_SECTIONS:
            continue
        body = merged.setdefault(section, {})
        for key, value in defaults.items():
            body.setdefault(key, copy.deepcopy(value))
    return merged


@dataclass(frozen=True)
class RunConfig:
    """Materialized verification run: model, drift, test function and numerics"""
    model: OperatorModel
    drift: VectorField
    phi: ScalarField
    sampler: SupSampler
    quad: QuadratureSpec
    sections: Dict[str, Any] = field(default_factory=dict)

    def section(self, name: str) -> Dict[str, Any]:
        return self.sections.get(name, {})

    @property
    def seed(self) -> int:
        return int(self.sampler.seed)


def build_run_config(config: Dict[str, Any]) -> RunConfig:
    """
    Validate a config dict and build every object it names

    Raises:
        ConfigError: structural errors, or invalid parameters for the built objects
    """
    is_valid, errors, warnings = validate_config_structure(config)
    for warning in warnings:
        logger.warning(warning)
    if not is_valid:
        raise ConfigError("; ".join(errors))

    merged = merge_with_reference(config)
    model_section = merged["model"]
    dim = model_section["dim"]
    try:
        model = build_model(model_section)
        drift_section = merged["drift"]
        drift = builtin_field(drift_section["name"], dim, drift_section.get("scale", 1.0),
                              drift_section.get("v"), drift_section.get("w"))
        phi_section = dict(merged["phi"])
        phi = builtin_scalar(phi_section.pop("kind"), dim, **phi_section)
        sampler = SupSampler(dim, **merged["sup_sampler"])
        quad = QuadratureSpec(**merged["quadrature"])
    except ConfigError:
        raise
    except (VerificationError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e

    logger.info("config: dim=%d, drift=%s, phi=%s, omega=%.4g", dim, drift.name, phi.name,
                model.omega)
    return RunConfig(model, drift, phi, sampler, quad, merged)


def load_config(path) -> RunConfig:
    """Read, validate and build a config file"""
    return build_run_config(read_config(path))
