"""
Compressed embedding table: integer codes plus step sizes
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from lpqe.errors import ConfigError, FeatureIndexError, InvalidParameterError, InvariantViolation
from lpqe.quant.core import QuantSpec, quantize_codes
from lpqe.quant.rng import RngStream
from lpqe.utils.common import log_warn
from lpqe.utils.states import DeltaLayout, RoundingMode

DELTA_FLOOR = 1e-8
FP_BYTES = 4

CHECKPOINT_MAGIC = b'LPQE'
CHECKPOINT_VERSION = 2
# step sizes are float32 in version 1 files
DELTA_DTYPES = {1: np.dtype('<f4'), 2: np.dtype('<f8')}
CHECKPOINT_HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('n', '<u8'),
    ('d', '<u4'),
    ('bits', 'u1'),
    ('mode', 'u1'),
    ('layout', 'u1'),
])
MODE_CODES = {RoundingMode.DETERMINISTIC: 0, RoundingMode.STOCHASTIC: 1}


@dataclass
class SparseBatch:
    """Deduplicated rows touched by a mini-batch

    feature_ids holds each row once (sorted), local_ids maps every
    (sample, field) slot to its position in feature_ids.
    """
    feature_ids: np.ndarray
    local_ids: np.ndarray

    @classmethod
    def from_ids(cls, ids, n: int) -> 'SparseBatch':
        """Build a batch from a (samples x fields) matrix of row ids"""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise FeatureIndexError("feature id out of range [0, {0})".format(n))
        feature_ids, inverse = np.unique(ids, return_inverse=True)
        return cls(feature_ids=feature_ids, local_ids=inverse.reshape(ids.shape))

    @classmethod
    def of_rows(cls, rows, n: int) -> 'SparseBatch':
        """Batch covering the given rows, one single-field sample per row"""
        return cls.from_ids(np.asarray(rows, dtype=np.int64).reshape(-1, 1), n)

    def __len__(self) -> int:
        return int(self.feature_ids.shape[0])


@dataclass(frozen=True)
class MemoryFootprint:
    """Storage accounting in bytes, step sizes included"""
    fp_bytes: int
    quantized_bytes: int
    step_size_bytes: int
    training_ratio: float
    inference_ratio: float
    optimizer_bytes: int = 0

    @property
    def state_ratio(self) -> float:
        """Training compression with the optimizer state counted as stored bytes"""
        return self.fp_bytes / (self.fp_bytes / self.training_ratio + self.optimizer_bytes)

    @classmethod
    def full_precision(cls, n: int, d: int) -> 'MemoryFootprint':
        fp_bytes = n * d * FP_BYTES
        return cls(fp_bytes, fp_bytes, 0, 1.0, 1.0)

    def as_dict(self):
        return {
            'fp_bytes': self.fp_bytes,
            'quantized_bytes': self.quantized_bytes,
            'step_size_bytes': self.step_size_bytes,
            'training_ratio': self.training_ratio,
            'inference_ratio': self.inference_ratio,
            'optimizer_bytes': self.optimizer_bytes,
            'state_ratio': self.state_ratio,
        }


class QuantizedEmbeddingTable:
    """n x d integer codes with global or feature-wise step sizes"""

    def __init__(self, codes: np.ndarray, deltas: np.ndarray, spec: QuantSpec,
                 layout: DeltaLayout = DeltaLayout.FEATURE):
        """Initialise all attributes"""
        codes = np.asarray(codes)
        if codes.ndim != 2:
            raise InvalidParameterError("codes must be a matrix, got shape {!r}".format(codes.shape))
        deltas = np.asarray(deltas, dtype=np.float64).reshape(-1)
        if deltas.shape[0] == 1 and codes.shape[0] != 1:
            deltas = np.full(codes.shape[0], deltas[0])
        if deltas.shape[0] != codes.shape[0]:
            raise InvalidParameterError("expected {0} step sizes, got {1}".format(codes.shape[0], deltas.shape[0]))
        if codes.size and (codes.min() < spec.qmin or codes.max() > spec.qmax):
            raise InvariantViolation("code outside [{0}, {1}]".format(spec.qmin, spec.qmax))
        self.spec: QuantSpec = spec
        self.layout: DeltaLayout = layout
        self.codes: np.ndarray = codes.astype(spec.storage_dtype)
        self.deltas: np.ndarray = deltas
        self.check_invariants()

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"QuantizedEmbeddingTable(n={0}, d={1}, bits={2}, layout={3})".format(
            self.n, self.d, self.spec.bits, self.layout.name.lower())

    @property
    def n(self) -> int:
        return int(self.codes.shape[0])

    @property
    def d(self) -> int:
        return int(self.codes.shape[1])

    def check_invariants(self):
        """Raise if a code is out of range or a step size is not positive"""
        if self.codes.size and (self.codes.min() < self.spec.qmin or self.codes.max() > self.spec.qmax):
            raise InvariantViolation("code outside [{0}, {1}]".format(self.spec.qmin, self.spec.qmax))
        if not np.all(np.isfinite(self.deltas)) or np.any(self.deltas <= 0):
            raise InvariantViolation("non-positive or non-finite step size")
        if self.layout is DeltaLayout.GLOBAL and np.any(self.deltas != self.deltas[0]):
            raise InvariantViolation("global layout with diverging step sizes")

    def _check_rows(self, rows: np.ndarray):
        if rows.size and (rows.min() < 0 or rows.max() >= self.n):
            raise FeatureIndexError("feature id out of range [0, {0})".format(self.n))

    def gather(self, batch: SparseBatch) -> np.ndarray:
        """Dequantized rows of the batch, deltas[id] * codes[id, :]"""
        rows = np.asarray(batch.feature_ids, dtype=np.int64)
        self._check_rows(rows)
        return self.deltas[rows, None] * self.codes[rows].astype(np.float64)

    def row_deltas(self, batch: SparseBatch) -> np.ndarray:
        return self.deltas[np.asarray(batch.feature_ids, dtype=np.int64)]

    def scatter_requantize(self, batch: SparseBatch, new_weights, new_deltas=None,
                           rng: Optional[RngStream] = None,
                           mode: RoundingMode = RoundingMode.STOCHASTIC) -> 'QuantizedEmbeddingTable':
        """Write full-precision rows back as codes, with new step sizes if given

        Rows outside the batch are untouched.
        """
        rows = np.asarray(batch.feature_ids, dtype=np.int64)
        self._check_rows(rows)
        new_weights = np.asarray(new_weights, dtype=np.float64)
        if new_weights.shape != (rows.shape[0], self.d):
            raise InvalidParameterError("weights shape {0!r} does not match batch ({1}, {2})".format(
                new_weights.shape, rows.shape[0], self.d))
        if new_deltas is None:
            deltas = self.deltas[rows]
        else:
            deltas = np.asarray(new_deltas, dtype=np.float64).reshape(-1)
            if deltas.shape[0] != rows.shape[0]:
                raise InvalidParameterError("expected {0} step sizes, got {1}".format(rows.shape[0],
                                                                                       deltas.shape[0]))
            if not np.all(np.isfinite(deltas)) or np.any(deltas <= 0):
                raise InvalidParameterError("step sizes must be positive")
            deltas = np.maximum(deltas, DELTA_FLOOR)
            if self.layout is DeltaLayout.GLOBAL and np.any(deltas != self.deltas[0]):
                raise InvalidParameterError("global step size cannot be changed row-wise")
        codes = quantize_codes(new_weights, deltas[:, None], self.spec.bits, mode, rng)
        self.codes[rows] = codes.astype(self.spec.storage_dtype)
        self.deltas[rows] = deltas
        return self

    def footprint(self) -> MemoryFootprint:
        """Compression accounting, step size storage included"""
        fp_bytes = self.n * self.d * FP_BYTES
        quantized_bytes = self.n * self.d * self.spec.storage_dtype.itemsize
        if self.layout is DeltaLayout.FEATURE:
            step_size_bytes = self.n * FP_BYTES
        else:
            step_size_bytes = FP_BYTES
        ratio = fp_bytes / float(quantized_bytes + step_size_bytes)
        return MemoryFootprint(fp_bytes, quantized_bytes, step_size_bytes, ratio, ratio)

    def delta_stats(self) -> Tuple[float, float, float]:
        """Minimum, mean and maximum step size"""
        return float(self.deltas.min()), float(self.deltas.mean()), float(self.deltas.max())

    def dequantize_all(self) -> np.ndarray:
        return self.deltas[:, None] * self.codes.astype(np.float64)

    def copy(self) -> 'QuantizedEmbeddingTable':
        return QuantizedEmbeddingTable(self.codes.copy(), self.deltas.copy(), self.spec, self.layout)

    def to_bytes(self) -> bytes:
        """Serialise to the LPQE checkpoint format"""
        header = np.zeros(1, dtype=CHECKPOINT_HEADER)
        header['magic'] = CHECKPOINT_MAGIC
        header['version'] = CHECKPOINT_VERSION
        header['n'] = self.n
        header['d'] = self.d
        header['bits'] = self.spec.bits
        header['mode'] = MODE_CODES[self.spec.mode]
        header['layout'] = self.layout.value
        if self.layout is DeltaLayout.FEATURE:
            deltas = self.deltas
        else:
            deltas = self.deltas[:1]
        code_dtype = self.spec.storage_dtype.newbyteorder('<')
        delta_dtype = DELTA_DTYPES[CHECKPOINT_VERSION]
        return header.tobytes() + deltas.astype(delta_dtype).tobytes() + self.codes.astype(code_dtype).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> 'QuantizedEmbeddingTable':
        """Parse an LPQE checkpoint"""
        if len(blob) < CHECKPOINT_HEADER.itemsize:
            raise ConfigError("checkpoint truncated: no header")
        header = np.frombuffer(blob, dtype=CHECKPOINT_HEADER, count=1)[0]
        if bytes(header['magic']) != CHECKPOINT_MAGIC:
            raise ConfigError("not an LPQE checkpoint (magic {!r})".format(bytes(header['magic'])))
        version = int(header['version'])
        if version not in DELTA_DTYPES:
            raise ConfigError("unsupported checkpoint version {}".format(version))
        delta_dtype = DELTA_DTYPES[version]
        n, d, bits = int(header['n']), int(header['d']), int(header['bits'])
        mode = {v: k for k, v in MODE_CODES.items()}[int(header['mode'])]
        layout = DeltaLayout(int(header['layout']))
        offset = CHECKPOINT_HEADER.itemsize
        n_deltas = n if layout is DeltaLayout.FEATURE else 1
        code_dtype = (np.dtype(np.int8) if bits <= 8 else np.dtype(np.int16)).newbyteorder('<')
        expected = offset + n_deltas * delta_dtype.itemsize + n * d * code_dtype.itemsize
        if len(blob) != expected:
            raise ConfigError("checkpoint size {0} does not match header ({1})".format(len(blob), expected))
        deltas = np.frombuffer(blob, dtype=delta_dtype, count=n_deltas, offset=offset).astype(np.float64)
        offset += n_deltas * delta_dtype.itemsize
        codes = np.frombuffer(blob, dtype=code_dtype, count=n * d, offset=offset).reshape(n, d)
        spec = QuantSpec(bits=bits, delta=float(deltas[0]), mode=mode)
        return cls(codes.copy(), deltas, spec, layout)

    def dump(self, path) -> bool:
        """Write the checkpoint to a file"""
        with open(path, 'wb') as out_f:
            out_f.write(self.to_bytes())
        return True

    @classmethod
    def load(cls, path) -> 'QuantizedEmbeddingTable':
        """Read a checkpoint from a file"""
        with open(path, 'rb') as in_f:
            return cls.from_bytes(in_f.read())


def init_table(n: int, d: int, spec: QuantSpec, init_scale: float, rng: RngStream,
               layout: DeltaLayout = DeltaLayout.FEATURE, delta: Optional[float] = None) -> QuantizedEmbeddingTable:
    """Draw Uniform(-init_scale, init_scale) weights and quantize them with stochastic rounding

    Step sizes start at init_scale / (2^(m-1) - 1) unless `delta` is given.
    """
    if n < 1 or d < 1:
        raise InvalidParameterError("table must have at least one row and one column")
    if not np.isfinite(init_scale) or init_scale <= 0:
        raise InvalidParameterError("init scale must be positive, got {!r}".format(init_scale))
    if delta is None:
        delta = init_scale / spec.qmax
    if delta <= 0:
        raise InvalidParameterError("initial step size must be positive, got {!r}".format(delta))
    delta = max(float(delta), DELTA_FLOOR)
    weights = rng.uniform((n, d)) * (2.0 * init_scale) - init_scale
    if not np.any(quantize_codes(weights, delta, spec.bits, RoundingMode.DETERMINISTIC)):
        log_warn("Init scale {0!r} is below half a step ({1!r}): all codes round to zero".format(init_scale, delta))
    codes = quantize_codes(weights, delta, spec.bits, RoundingMode.STOCHASTIC, rng.advance())
    return QuantizedEmbeddingTable(codes, np.full(n, delta), spec.with_delta(delta), layout)
