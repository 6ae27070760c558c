# Utilities/errors.py
from typing import List, Optional


class MixfleetError(Exception):
    """Base class for every error raised by the solver and the scenario tools"""
    exit_code = 3


class InstanceDataError(MixfleetError):
    """Malformed or invalid instance data, optionally pinned to a file location"""
    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ConfigurationError(MixfleetError):
    exit_code = 2


class ModelDomainError(MixfleetError, ValueError):
    """A model formula was evaluated outside its domain"""
    exit_code = 3


class SolverError(MixfleetError):
    exit_code = 3


class EquilibriumError(SolverError):
    """Fixed-point iteration failed; keeps the residual history for diagnostics"""

    def __init__(self, message: str, residual_history: Optional[List[float]] = None):
        self.residual_history = residual_history or []
        super().__init__(message)


class InfeasibleTargetError(SolverError):
    pass


class ExistenceConditionError(SolverError):
    pass


class InternalInconsistencyError(SolverError):
    pass


class DualDivergenceError(SolverError):
    pass


class RefineFailure(SolverError):
    pass


class UndefinedGapError(SolverError):
    pass
