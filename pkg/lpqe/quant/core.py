"""
Uniform symmetric quantization kernels

All kernels are elementwise over numpy arrays and return python scalars for
scalar input. Real arithmetic is float64.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from lpqe.errors import DomainError, InvalidParameterError, InvalidRangeError
from lpqe.quant.rng import RngStream
from lpqe.utils.states import RoundingMode

MIN_BITS = 2
MAX_BITS = 16


@dataclass(frozen=True)
class QuantSpec:
    """Bit width, step size and rounding mode of a uniform symmetric quantizer"""
    bits: int
    delta: float
    mode: RoundingMode = RoundingMode.DETERMINISTIC

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or not MIN_BITS <= self.bits <= MAX_BITS:
            raise InvalidParameterError("bit width must be an integer in [{0}, {1}], got {2!r}".format(
                MIN_BITS, MAX_BITS, self.bits))
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise InvalidParameterError("step size must be positive, got {!r}".format(self.delta))
        if not isinstance(self.mode, RoundingMode):
            raise InvalidParameterError("unknown rounding mode {!r}".format(self.mode))

    @property
    def qmin(self) -> int:
        """Lowest integer code"""
        return -2 ** (self.bits - 1)

    @property
    def qmax(self) -> int:
        """Highest integer code, also the q of the gradient scale"""
        return 2 ** (self.bits - 1) - 1

    @property
    def real_min(self) -> float:
        return self.qmin * self.delta

    @property
    def real_max(self) -> float:
        return self.qmax * self.delta

    @property
    def storage_dtype(self) -> np.dtype:
        """Smallest byte-addressable signed cell holding the codes"""
        return np.dtype(np.int8) if self.bits <= 8 else np.dtype(np.int16)

    def with_delta(self, delta: float) -> 'QuantSpec':
        return replace(self, delta=float(delta))


def _scalar_or_array(template, result):
    """Unwrap 0-d results back to python scalars"""
    if np.ndim(template) == 0:
        return np.asarray(result).item()
    return result


def _check_finite(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("input must be finite")
    return arr


def clip(v, lo, hi):
    """Clamp v into [lo, hi]"""
    if np.any(np.asarray(lo) > np.asarray(hi)):
        raise InvalidRangeError("clip range is empty: lo={!r} > hi={!r}".format(lo, hi))
    return _scalar_or_array(v, np.minimum(np.maximum(v, lo), hi))


def _round_det(arr: np.ndarray) -> np.ndarray:
    floor = np.floor(arr)
    # ties go up: the lower neighbour is kept only for a fraction strictly below one half
    return (floor + (arr - floor >= 0.5)).astype(np.int64)


def _round_stoch(arr: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    floor = np.floor(arr)
    return (floor + (uniforms < arr - floor)).astype(np.int64)


def round_det(x):
    """Round to nearest integer, halves rounding up"""
    arr = _check_finite(x)
    return _scalar_or_array(x, _round_det(arr))


def round_stoch(x, rng: RngStream):
    """Round to floor(x)+1 with probability x-floor(x), else floor(x)"""
    arr = _check_finite(x)
    return _scalar_or_array(x, _round_stoch(arr, rng.uniform(arr.shape)))


def quantize_codes(w, delta, bits: int, mode: RoundingMode, rng: Optional[RngStream] = None) -> np.ndarray:
    """Array kernel of the quantizer: clip(w/delta) then round, delta broadcastable against w"""
    arr = _check_finite(w)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise InvalidParameterError("step size must be positive")
    qmin, qmax = -2 ** (bits - 1), 2 ** (bits - 1) - 1
    scaled = np.clip(arr / delta, qmin, qmax)
    if mode is RoundingMode.STOCHASTIC:
        if rng is None:
            raise InvalidParameterError("stochastic rounding requires a random stream")
        return _round_stoch(scaled, rng.uniform(scaled.shape))
    return _round_det(scaled)


def quantize_to_int(w, spec: QuantSpec, rng: Optional[RngStream] = None):
    """Integer code of w under spec"""
    return _scalar_or_array(w, quantize_codes(w, spec.delta, spec.bits, spec.mode, rng))


def dequantize(code, delta):
    """Real value delta * code"""
    return _scalar_or_array(code, np.asarray(delta, dtype=np.float64) * np.asarray(code, dtype=np.float64))


def fake_quantize(w, delta, bits: int) -> np.ndarray:
    """Deterministic quantize-dequantize, Q_D(w, delta)"""
    delta = np.asarray(delta, dtype=np.float64)
    return delta * quantize_codes(w, delta, bits, RoundingMode.DETERMINISTIC)


def lsq_step_grad(w, spec: QuantSpec, delta=None):
    """Straight-through gradient of Q_D(w) with respect to the step size

    Clipped regions return the code bound, the interior returns R_D(w/delta) - w/delta.
    `delta` overrides spec.delta and may be an array broadcastable against w.
    """
    arr = _check_finite(w)
    delta = np.asarray(spec.delta if delta is None else delta, dtype=np.float64)
    scaled = arr / delta
    interior = _round_det(np.clip(scaled, spec.qmin, spec.qmax)) - scaled
    grad = np.where(scaled <= spec.qmin, float(spec.qmin),
                    np.where(scaled >= spec.qmax, float(spec.qmax), interior))
    return _scalar_or_array(w, grad)


def pact_clip_grad(w, alpha):
    """Gradient of clip(w, -alpha, alpha) with respect to alpha"""
    if np.any(np.asarray(alpha) <= 0):
        raise InvalidParameterError("clip value must be positive, got {!r}".format(alpha))
    arr = _check_finite(w)
    grad = np.where(arr >= alpha, 1.0, np.where(arr <= -alpha, -1.0, 0.0))
    return _scalar_or_array(w, grad)
