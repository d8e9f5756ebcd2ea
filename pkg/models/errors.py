"""
Exception hierarchy shared by every verification module
"""


class VerificationError(Exception):
    """Base class for all errors raised by the verifier"""


class ModelValidationError(VerificationError):
    """Invalid operator model, field or sampler parameters"""


class QuadratureError(VerificationError):
    """Gaussian or Laplace quadrature could not be carried out"""


class FlowIntegrationError(VerificationError):
    """RK4 step halving did not reach the requested tolerance"""


class SolverConvergenceError(VerificationError):
    """Fixed point iteration exhausted its iteration budget"""


class ConfigError(VerificationError):
    """Configuration file could not be read or is malformed"""

    def __init__(self, message: str, line: int = None, column: int = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ReportExportError(VerificationError):
    """Report could not be written to the requested path"""


def raise_if_invalid(is_valid: bool, errors: list, error_cls=ModelValidationError) -> None:
    """Raise error_cls with all validation messages joined"""
    if not is_valid:
        raise error_cls("; ".join(errors))
