from enum import Enum
from typing import Any


class RoundingMode(Enum):
    """Rounding function applied after clipping"""
    DETERMINISTIC = 'dr'
    STOCHASTIC = 'sr'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)


class RegimeKind(Enum):
    """Embedding training rule"""
    FP = 'fp'
    QAT_LSQ = 'qat-lsq'
    QAT_PACT = 'qat-pact'
    LPT = 'lpt'
    ALPT = 'alpt'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)

    @property
    def is_quantized_storage(self) -> bool:
        """True if the training-time table holds integer codes"""
        return self in (RegimeKind.LPT, RegimeKind.ALPT)


class DeltaLayout(Enum):
    """Step size granularity of a quantized table"""
    GLOBAL = 0
    FEATURE = 1


class HeadKind(Enum):
    """CTR model head"""
    LINEAR_SUM = 'linear-sum'
    FM = 'fm'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)


class ScheduleMode(Enum):
    """Learning rate schedule"""
    CONSTANT = 'constant'
    INVERSE_SQRT = 'inverse-sqrt'
    EPOCH_DECAY = 'epoch-decay'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)


class GradScale(Enum):
    """Step size gradient scaling"""
    NONE = 'none'
    DQ = 'dq'
    BDQ = 'bdq'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)


class LabRegime(Enum):
    """Synthetic convex experiment regimes"""
    FP = 'fp'
    LPT_DR = 'lpt-dr'
    LPT_SR = 'lpt-sr'

    @classmethod
    def has_value(cls, value):
        return any(value == item.value for item in cls)


class Result:
    """Operation result status"""
    def __init__(self, status: bool = False, value: Any = None):
        """Initialise all attributes"""
        self.status: bool = status
        self.value: Any = value

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"{} {}".format(self.status, self.value)
