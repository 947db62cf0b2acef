"""
Exception types and the CLI exit-code contract
"""
from typing import Optional, Sequence, Tuple


class GravcompError(Exception):
    """Base class for toolkit failures that map onto a CLI exit code"""

    exit_code = 1


class ParseError(GravcompError):
    """Robot/experiment/data file could not be parsed or validated"""

    exit_code = 2


class DimensionError(GravcompError, ValueError):
    """Vector or matrix length does not match the model's joint count"""

    exit_code = 3


class StorageError(GravcompError):
    """File could not be read or written"""

    exit_code = 4


class DegenerateModelError(GravcompError):
    """Regressor has rank 0; nothing is identifiable"""

    exit_code = 5


class SimulationDivergence(GravcompError):
    """Integration produced a non-finite or runaway state"""

    exit_code = 6

    def __init__(self, message: str, t: Optional[float] = None):
        if t is not None:
            message = f"{message} (t={t:.6g} s)"
        super().__init__(message)
        self.t = t


class SingularMassMatrixError(SimulationDivergence):
    """Mass matrix is not positive definite at the given pose"""

    def __init__(self, q: Sequence[float], t: Optional[float] = None):
        pose = ", ".join(f"{v:.6g}" for v in q)
        super().__init__(f"mass matrix is singular at q=[{pose}]", t)
        self.q = tuple(float(v) for v in q)


class NonFiniteMeasurementError(ValueError):
    """Controller received NaN/inf in a joint measurement"""

    def __init__(self, joint: int, field: str = "q"):
        super().__init__(f"non-finite {field} measurement on joint {joint + 1}")
        self.joint = joint


class TuningError(GravcompError):
    """No sustained-oscillation gain inside the searched bracket"""

    exit_code = 6

    def __init__(self, message: str, bracket: Tuple[float, float]):
        super().__init__(f"{message}; tested kp bracket [{bracket[0]:.6g}, {bracket[1]:.6g}]")
        self.bracket = bracket
