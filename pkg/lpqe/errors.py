"""
This module implements lpqe exceptions
"""


class DomainError(ValueError):
    """Input outside of the mathematical domain (non-finite value, t < 1)"""


class InvalidRangeError(ValueError):
    """Interval with lower bound above upper bound"""


class InvalidParameterError(ValueError):
    """Parameter violates its precondition (non-positive step size, bad bit width, shape mismatch)"""


class FeatureIndexError(IndexError):
    """Feature id outside of the embedding table"""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given labels"""


class StaleTapeError(RuntimeError):
    """Backward pass requested on a tape recorded with different model parameters"""


class LpqeError(Exception):
    """Run-level failure, carries the process exit code"""
    exit_code: int = 1


class ConfigError(LpqeError):
    """Invalid configuration or input files"""
    exit_code = 2


class NumericFailure(LpqeError):
    """NaN or infinite loss during training"""
    exit_code = 3


class InvariantViolation(LpqeError):
    """Invariant detected broken at runtime"""
    exit_code = 4


class BoundViolation(InvariantViolation):
    """Measured value exceeds a theoretical bound"""

    def __init__(self, name: str, step: int, measured: float, bound: float):
        """Initialise all attributes"""
        self.name: str = name
        self.step: int = step
        self.measured: float = measured
        self.bound: float = bound
        super().__init__("{0} violated at step {1}: measured {2!r} > bound {3!r}".format(name, step, measured,
                                                                                          bound))


class LemmaViolation(BoundViolation):
    """Quantization error exceeds a lemma bound"""
