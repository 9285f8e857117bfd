"""
Embedding training regimes: full precision, QAT (LSQ, PACT), LPT and ALPT

Each regime owns the embedding storage of one run and turns gradients taken
at the gathered (dequantized) weights into an update of that storage.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from lpqe.errors import InvalidParameterError, InvariantViolation, NumericFailure
from lpqe.quant.core import QuantSpec, fake_quantize, lsq_step_grad, pact_clip_grad, quantize_codes
from lpqe.quant.rng import STREAM_INIT, STREAM_REQUANTIZE, RngStream
from lpqe.quant.store import DELTA_FLOOR, FP_BYTES, MemoryFootprint, QuantizedEmbeddingTable, SparseBatch, init_table
from lpqe.train.optim import DenseOptimizer, RowSgd, make_row_optimizer, sgd_step
from lpqe.utils.states import DeltaLayout, GradScale, RegimeKind, RoundingMode

# Half-range of a fixed-step table when neither a clip value nor an initial step size is set
LPT_DEFAULT_RANGE = 0.127

# Callback of the second ALPT pass: deterministically quantized rows in, gradient w.r.t. them out
Refeed = Callable[[np.ndarray], np.ndarray]


@dataclass
class UpdateStats:
    """Diagnostics of one embedding update"""
    rows: int = 0
    erased: int = 0
    clamped: int = 0


@dataclass
class UpdateContext:
    """Per-iteration inputs shared by all regimes"""
    lr: float
    iteration: int = 1
    lr_delta: float = 0.0
    refeed: Optional[Refeed] = None


@dataclass
class AllocationLedger:
    """Full-precision value accounting of the embedding storage and its optimizers"""
    persistent_fp: int = 0
    peak_transient_fp: int = 0
    optimizers: List = field(default_factory=list, repr=False)

    @property
    def optimizer_fp(self) -> int:
        """Live optimizer state, counted when read"""
        return sum(optimizer.state_size for optimizer in self.optimizers)

    @property
    def shadow_free(self) -> bool:
        """No full-precision value per table row survives an update"""
        return self.persistent_fp == 0 and self.optimizer_fp == 0

    def transient(self, count: int):
        self.peak_transient_fp = max(self.peak_transient_fp, int(count))

    def check_transient(self, limit: int):
        """Raise if a single update held more than `limit` full-precision values"""
        if self.peak_transient_fp > limit:
            raise InvariantViolation("transient full-precision values {0} exceed {1}".format(
                self.peak_transient_fp, limit))


@dataclass(frozen=True)
class RegimeSettings:
    """Hyper-parameters of the embedding regime"""
    kind: RegimeKind = RegimeKind.ALPT
    bits: int = 8
    rounding: RoundingMode = RoundingMode.STOCHASTIC
    init_scale: float = 0.01
    delta_init: Optional[float] = None
    clip_value: Optional[float] = None
    grad_scale: GradScale = GradScale.BDQ
    optimizer: str = 'adam'
    weight_decay: float = 0.0
    delta_optimizer: str = 'adam'
    delta_weight_decay: float = 0.0
    batch_size: int = 1024


def grad_scale_value(scale: GradScale, batch_size: int, d: int, bits: int) -> float:
    """Step size gradient multiplier g: 1, 1/sqrt(dq) or 1/sqrt(bdq)"""
    q = 2 ** (bits - 1) - 1
    if scale is GradScale.DQ:
        return 1.0 / np.sqrt(d * q)
    if scale is GradScale.BDQ:
        return 1.0 / np.sqrt(batch_size * d * q)
    return 1.0


def qat_update(shadow_w, grads, lr: float, optimizer=None, rows=None):
    """Shadow weights after one step with gradients taken at their quantized values

    The gradient passes straight through the rounding. Without an optimizer the
    step is plain SGD.
    """
    if optimizer is None:
        return sgd_step(shadow_w, grads, lr)
    return optimizer.step_rows(rows, np.asarray(shadow_w, dtype=np.float64), grads, lr)


def lpt_update(table: QuantizedEmbeddingTable, batch: SparseBatch, grads, lr: float, rng: Optional[RngStream],
               optimizer=None, clip_value: Optional[float] = None,
               mode: RoundingMode = RoundingMode.STOCHASTIC) -> UpdateStats:
    """Requantize (dequantized rows - lr * grads) in place with the table's fixed step sizes"""
    rows = np.asarray(batch.feature_ids, dtype=np.int64)
    grads = np.asarray(grads, dtype=np.float64)
    weights = table.gather(batch)
    if optimizer is None:
        new_weights = weights - lr * grads
    else:
        new_weights = optimizer.step_rows(rows, weights, grads, lr)
    if clip_value is not None:
        new_weights = np.clip(new_weights, -clip_value, clip_value)
    before = table.codes[rows].copy()
    table.scatter_requantize(batch, new_weights, rng=rng, mode=mode)
    erased = int(np.count_nonzero((table.codes[rows] == before) & (grads != 0)))
    return UpdateStats(rows=int(rows.size), erased=erased)


def alpt_update(table: QuantizedEmbeddingTable, batch: SparseBatch, grads, lr: float, lr_delta: float,
                refeed: Refeed, rng: Optional[RngStream], optimizer=None, delta_optimizer=None,
                grad_scale: float = 1.0, delta_weight_decay: float = 0.0,
                mode: RoundingMode = RoundingMode.STOCHASTIC) -> UpdateStats:
    """Two-step adaptive update of the batch rows

    Step one moves the weights with the gradient at the dequantized rows. Step two
    feeds Q_D(w_next, delta) back through `refeed` and moves each row's step size
    by the scaled chain rule over lsq_step_grad. The rows are then requantized with
    the new step sizes.
    """
    if table.layout is not DeltaLayout.FEATURE:
        raise InvalidParameterError("adaptive step sizes need a feature-wise table")
    rows = np.asarray(batch.feature_ids, dtype=np.int64)
    grads = np.asarray(grads, dtype=np.float64)
    weights = table.gather(batch)
    if optimizer is None:
        new_weights = weights - lr * grads
    else:
        new_weights = optimizer.step_rows(rows, weights, grads, lr)

    deltas = table.row_deltas(batch)
    refeed_grads = np.asarray(refeed(fake_quantize(new_weights, deltas[:, None], table.spec.bits)),
                              dtype=np.float64)
    if refeed_grads.shape != new_weights.shape:
        raise InvalidParameterError("refeed returned shape {0!r}, expected {1!r}".format(refeed_grads.shape,
                                                                                         new_weights.shape))
    step_grads = lsq_step_grad(new_weights, table.spec, deltas[:, None])
    delta_grads = grad_scale * np.sum(refeed_grads * step_grads, axis=1)
    if delta_optimizer is None:
        delta_optimizer = RowSgd(delta_weight_decay)
    new_deltas = delta_optimizer.step_rows(rows, deltas[:, None], delta_grads[:, None], lr_delta)[:, 0]
    if not np.all(np.isfinite(new_deltas)):
        raise NumericFailure("step size update produced a non-finite value")
    clamped = int(np.count_nonzero(new_deltas < DELTA_FLOOR))
    new_deltas = np.maximum(new_deltas, DELTA_FLOOR)
    table.scatter_requantize(batch, new_weights, new_deltas, rng=rng, mode=mode)
    return UpdateStats(rows=int(rows.size), clamped=clamped)


class EmbeddingRegime:
    """Storage and update rule of an embedding table"""
    kind: RegimeKind = RegimeKind.FP

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        """Initialise all attributes"""
        if n < 1 or d < 1:
            raise InvalidParameterError("embedding table must have at least one row and one column")
        self.n: int = n
        self.d: int = d
        self.settings: RegimeSettings = settings
        self.rng: RngStream = rng
        self.ledger: AllocationLedger = AllocationLedger()
        self.optimizer = make_row_optimizer(settings.optimizer, n, d, settings.weight_decay)
        self.ledger.optimizers.append(self.optimizer)

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"{0}(n={1}, d={2})".format(self.__class__.__name__, self.n, self.d)

    def requantize_stream(self, iteration: int) -> RngStream:
        """Rounding stream of one iteration, independent of row order"""
        return self.rng.child(STREAM_REQUANTIZE).at(iteration)

    def gather(self, batch: SparseBatch) -> np.ndarray:
        raise NotImplementedError

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        raise NotImplementedError

    def storage_footprint(self) -> MemoryFootprint:
        raise NotImplementedError

    def footprint(self) -> MemoryFootprint:
        """Storage footprint with the live optimizer state"""
        return replace(self.storage_footprint(), optimizer_bytes=self.ledger.optimizer_fp * FP_BYTES)

    def export_table(self) -> Optional[QuantizedEmbeddingTable]:
        """Inference table, None for full precision"""
        return None

    def delta_stats(self) -> Optional[Tuple[float, float, float]]:
        table = self.export_table()
        return None if table is None else table.delta_stats()

    def snapshot(self):
        raise NotImplementedError

    def restore(self, snapshot):
        raise NotImplementedError


def _uniform_weights(n: int, d: int, scale: float, rng: RngStream) -> np.ndarray:
    if not np.isfinite(scale) or scale <= 0:
        raise InvalidParameterError("init scale must be positive, got {!r}".format(scale))
    return rng.uniform((n, d)) * (2.0 * scale) - scale


class FullPrecisionRegime(EmbeddingRegime):
    """Float weights updated directly"""
    kind = RegimeKind.FP

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        super().__init__(n, d, settings, rng)
        self.weights: np.ndarray = _uniform_weights(n, d, settings.init_scale, rng.child(STREAM_INIT))
        self.ledger.persistent_fp = n * d

    def gather(self, batch: SparseBatch) -> np.ndarray:
        return self.weights[np.asarray(batch.feature_ids, dtype=np.int64)]

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        rows = np.asarray(batch.feature_ids, dtype=np.int64)
        self.weights[rows] = self.optimizer.step_rows(rows, self.weights[rows], grads, ctx.lr)
        return UpdateStats(rows=int(rows.size))

    def storage_footprint(self) -> MemoryFootprint:
        return MemoryFootprint.full_precision(self.n, self.d)

    def snapshot(self):
        return self.weights.copy()

    def restore(self, snapshot):
        self.weights = snapshot.copy()


class QatLsqRegime(EmbeddingRegime):
    """Full-precision shadow table with a single learned step size"""
    kind = RegimeKind.QAT_LSQ

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        super().__init__(n, d, settings, rng)
        self.spec: QuantSpec = QuantSpec(settings.bits, 1.0, RoundingMode.DETERMINISTIC)
        self.shadow: np.ndarray = _uniform_weights(n, d, settings.init_scale, rng.child(STREAM_INIT))
        delta = settings.delta_init if settings.delta_init is not None else settings.init_scale / self.spec.qmax
        self.params = {'delta': np.array([float(delta)])}
        self.delta_optimizer = DenseOptimizer(settings.delta_optimizer, settings.delta_weight_decay)
        self.ledger.optimizers.append(self.delta_optimizer)
        self.ledger.persistent_fp = n * d

    @property
    def delta(self) -> float:
        return float(self.params['delta'][0])

    def gather(self, batch: SparseBatch) -> np.ndarray:
        return fake_quantize(self.shadow[np.asarray(batch.feature_ids, dtype=np.int64)], self.delta,
                             self.spec.bits)

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        rows = np.asarray(batch.feature_ids, dtype=np.int64)
        grads = np.asarray(grads, dtype=np.float64)
        weights = self.shadow[rows]
        scale = grad_scale_value(self.settings.grad_scale, self.settings.batch_size, self.d, self.spec.bits)
        delta_grad = scale * np.sum(grads * lsq_step_grad(weights, self.spec, self.delta))
        self.shadow[rows] = qat_update(weights, grads, ctx.lr, self.optimizer, rows)
        self.delta_optimizer.step(self.params, {'delta': np.array([delta_grad])}, ctx.lr_delta)
        clamped = int(self.params['delta'][0] < DELTA_FLOOR)
        self.params['delta'] = np.maximum(self.params['delta'], DELTA_FLOOR)
        return UpdateStats(rows=int(rows.size), clamped=clamped)

    def export_table(self) -> QuantizedEmbeddingTable:
        codes = quantize_codes(self.shadow, self.delta, self.spec.bits, RoundingMode.DETERMINISTIC)
        return QuantizedEmbeddingTable(codes, [self.delta], self.spec.with_delta(self.delta), DeltaLayout.GLOBAL)

    def storage_footprint(self) -> MemoryFootprint:
        exported = self.export_table().footprint()
        return MemoryFootprint(exported.fp_bytes, exported.quantized_bytes, exported.step_size_bytes, 1.0,
                               exported.inference_ratio)

    def snapshot(self):
        return self.shadow.copy(), self.params['delta'].copy()

    def restore(self, snapshot):
        self.shadow = snapshot[0].copy()
        self.params['delta'] = snapshot[1].copy()


class QatPactRegime(QatLsqRegime):
    """Full-precision shadow table clipped to a learned [-alpha, alpha]"""
    kind = RegimeKind.QAT_PACT

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        super().__init__(n, d, settings, rng)
        if settings.clip_value is not None:
            alpha = settings.clip_value
        else:
            alpha = float(self.params['delta'][0]) * self.spec.qmax
        self.params = {'alpha': np.array([float(alpha)])}

    @property
    def alpha(self) -> float:
        return float(self.params['alpha'][0])

    @property
    def delta(self) -> float:
        return self.alpha / self.spec.qmax

    def gather(self, batch: SparseBatch) -> np.ndarray:
        weights = self.shadow[np.asarray(batch.feature_ids, dtype=np.int64)]
        return fake_quantize(np.clip(weights, -self.alpha, self.alpha), self.delta, self.spec.bits)

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        rows = np.asarray(batch.feature_ids, dtype=np.int64)
        grads = np.asarray(grads, dtype=np.float64)
        weights = self.shadow[rows]
        alpha_grad = np.sum(grads * pact_clip_grad(weights, self.alpha))
        inside = np.abs(weights) < self.alpha
        self.shadow[rows] = qat_update(weights, grads * inside, ctx.lr, self.optimizer, rows)
        self.delta_optimizer.step(self.params, {'alpha': np.array([alpha_grad])}, ctx.lr_delta)
        floor = DELTA_FLOOR * self.spec.qmax
        clamped = int(self.params['alpha'][0] < floor)
        self.params['alpha'] = np.maximum(self.params['alpha'], floor)
        return UpdateStats(rows=int(rows.size), clamped=clamped)

    def export_table(self) -> QuantizedEmbeddingTable:
        clipped = np.clip(self.shadow, -self.alpha, self.alpha)
        codes = quantize_codes(clipped, self.delta, self.spec.bits, RoundingMode.DETERMINISTIC)
        return QuantizedEmbeddingTable(codes, [self.delta], self.spec.with_delta(self.delta), DeltaLayout.GLOBAL)

    def snapshot(self):
        return self.shadow.copy(), self.params['alpha'].copy()

    def restore(self, snapshot):
        self.shadow = snapshot[0].copy()
        self.params['alpha'] = snapshot[1].copy()


class LptRegime(EmbeddingRegime):
    """Integer codes with a fixed global step size, no shadow weights"""
    kind = RegimeKind.LPT
    layout: DeltaLayout = DeltaLayout.GLOBAL

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        super().__init__(n, d, settings, rng)
        spec = QuantSpec(settings.bits, 1.0, settings.rounding)
        self.table: QuantizedEmbeddingTable = init_table(n, d, spec, settings.init_scale, rng.child(STREAM_INIT),
                                                         layout=self.layout, delta=self.initial_delta())

    def initial_delta(self) -> Optional[float]:
        """Step size spanning the clip range, or LPT_DEFAULT_RANGE without one"""
        if self.settings.delta_init is not None:
            return self.settings.delta_init
        return (self.settings.clip_value or LPT_DEFAULT_RANGE) / QuantSpec(self.settings.bits, 1.0).qmax

    def gather(self, batch: SparseBatch) -> np.ndarray:
        return self.table.gather(batch)

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        self.ledger.transient(len(batch) * self.d)
        return lpt_update(self.table, batch, grads, ctx.lr, self.requantize_stream(ctx.iteration),
                          optimizer=self.optimizer, clip_value=self.settings.clip_value, mode=self.settings.rounding)

    def storage_footprint(self) -> MemoryFootprint:
        return self.table.footprint()

    def export_table(self) -> QuantizedEmbeddingTable:
        return self.table.copy()

    def snapshot(self):
        return self.table.copy()

    def restore(self, snapshot):
        self.table = snapshot.copy()


class AlptRegime(LptRegime):
    """Integer codes with feature-wise step sizes learned from a second pass"""
    kind = RegimeKind.ALPT
    layout = DeltaLayout.FEATURE

    def __init__(self, n: int, d: int, settings: RegimeSettings, rng: RngStream):
        super().__init__(n, d, settings, rng)
        self.delta_optimizer = make_row_optimizer(settings.delta_optimizer, n, 1, settings.delta_weight_decay)
        self.ledger.optimizers.append(self.delta_optimizer)
        self.grad_scale: float = grad_scale_value(settings.grad_scale, settings.batch_size, d, settings.bits)

    def initial_delta(self) -> Optional[float]:
        """Learned step sizes start from init_scale / qmax unless given"""
        return self.settings.delta_init

    def update(self, batch: SparseBatch, grads: np.ndarray, ctx: UpdateContext) -> UpdateStats:
        if ctx.refeed is None:
            raise InvalidParameterError("adaptive update needs a refeed callback")
        self.ledger.transient(len(batch) * self.d)
        return alpt_update(self.table, batch, grads, ctx.lr, ctx.lr_delta, ctx.refeed,
                           self.requantize_stream(ctx.iteration), optimizer=self.optimizer,
                           delta_optimizer=self.delta_optimizer, grad_scale=self.grad_scale,
                           mode=self.settings.rounding)


REGIMES = {
    RegimeKind.FP: FullPrecisionRegime,
    RegimeKind.QAT_LSQ: QatLsqRegime,
    RegimeKind.QAT_PACT: QatPactRegime,
    RegimeKind.LPT: LptRegime,
    RegimeKind.ALPT: AlptRegime,
}


def make_regime(settings: RegimeSettings, n: int, d: int, rng: RngStream) -> EmbeddingRegime:
    """Instantiate the regime named by the settings"""
    return REGIMES[settings.kind](n, d, settings, rng)
