"""
Training loop of the CTR model under an embedding regime
"""
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lpqe.actions.dataset import EncodedDataset, PreparedData, load_prepared, synth_prepared
from lpqe.errors import ConfigError, NumericFailure, UndefinedMetricError
from lpqe.quant.rng import STREAM_MODEL, STREAM_SHUFFLE, RngStream
from lpqe.quant.store import MemoryFootprint, SparseBatch
from lpqe.session.config import RUN_SECTION, Config
from lpqe.train.model import CtrModel, auc, mean_logloss
from lpqe.train.optim import DenseOptimizer
from lpqe.train.regimes import UpdateContext, UpdateStats, make_regime
from lpqe.utils.common import (dump_dict_to_file, dump_json_lines, ensure_dir, log_debug, log_info, log_ok,
                               log_warn, memory_rss_mb)


@dataclass
class MetricRecord:
    """One line of the metric stream"""
    run_id: str
    epoch: int
    iteration: int
    split: str
    logloss: Optional[float]
    auc: Optional[float] = None
    training_ratio: float = 1.0
    inference_ratio: float = 1.0
    erased: int = 0
    clamped: int = 0
    delta_min: Optional[float] = None
    delta_mean: Optional[float] = None
    delta_max: Optional[float] = None

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainResult:
    """Outcome of a training run"""
    run_id: str
    records: List[MetricRecord]
    epochs_run: int
    best_epoch: int
    best_logloss: float
    best_auc: Optional[float]
    test_logloss: float
    test_auc: Optional[float]
    footprint: MemoryFootprint
    stopped_early: bool = False
    runtime: Dict[str, Any] = field(default_factory=dict)


class Trainer:
    """Seeded mini-batch training with per-epoch validation and early stopping"""

    def __init__(self, config: Config, data: PreparedData, version: str = ''):
        """Initialise all attributes"""
        self.config: Config = config
        self.data: PreparedData = data
        self.version: str = version
        self.run_id: str = config.get_run_id()
        self.seed: int = int(config.get_attr('train.seed'))
        self.batch_size: int = int(config.get_attr('train.batch_size'))
        self.epochs: int = int(config.get_attr('train.epochs'))
        self.patience: int = int(config.get_attr('train.patience'))
        self.rng: RngStream = RngStream(self.seed)
        self.settings = config.get_regime_settings()
        self.model_config = config.get_model_config(data.vocab.n_fields)
        self.regime = make_regime(self.settings, data.vocab.n, self.model_config.dim, self.rng)
        self.model: CtrModel = CtrModel(self.model_config, self.rng.child(STREAM_MODEL))
        self.dense_optimizer = DenseOptimizer(self.settings.optimizer, self.settings.weight_decay)
        self.schedule = config.get_schedule()
        self.delta_schedule = config.get_delta_schedule()
        self.iteration: int = 0
        self.records: List[MetricRecord] = []
        self.metrics_file: Optional[str] = None

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"Trainer(run={0}, regime={1})".format(self.run_id, self.settings.kind.value)

    def emit(self, record: MetricRecord):
        """Keep a record and append it to the metric stream"""
        self.records.append(record)
        if self.metrics_file is not None:
            dump_json_lines(self.metrics_file, [record.as_dict()], append=True)

    def _refeed(self, batch: SparseBatch, labels: np.ndarray):
        def refeed(quantized_rows: np.ndarray) -> np.ndarray:
            logits, tape = self.model.forward(quantized_rows, batch.local_ids)
            _, dlogit = mean_logloss(logits, labels)
            row_grads, _ = self.model.backward(tape, dlogit)
            return row_grads
        return refeed

    def step(self, ids: np.ndarray, labels: np.ndarray, epoch: int) -> Tuple[float, UpdateStats]:
        """One iteration over a mini-batch"""
        self.iteration += 1
        batch = SparseBatch.from_ids(ids, self.data.vocab.n)
        logits, tape = self.model.forward(self.regime.gather(batch), batch.local_ids)
        loss, dlogit = mean_logloss(logits, labels)
        if not np.isfinite(loss):
            self.emit(MetricRecord(self.run_id, epoch, self.iteration, 'train', None))
            raise NumericFailure("non-finite training loss at iteration {0} (epoch {1})".format(self.iteration,
                                                                                               epoch))
        row_grads, dense_grads = self.model.backward(tape, dlogit)
        lr = self.schedule.lr_for(self.iteration, epoch)
        self.dense_optimizer.step(self.model.params, dense_grads, lr)
        self.model.touch()
        lr_delta = self.delta_schedule.lr_for(self.iteration, epoch)
        ctx = UpdateContext(lr=lr, iteration=self.iteration, lr_delta=lr_delta, refeed=self._refeed(batch, labels))
        return loss, self.regime.update(batch, row_grads, ctx)

    def train_epoch(self, epoch: int) -> Tuple[float, UpdateStats]:
        """Shuffled pass over the training split"""
        train = self.data.train
        order = self.rng.child(STREAM_SHUFFLE, epoch).generator().permutation(len(train))
        losses, weights = [], []
        totals = UpdateStats()
        for start in range(0, len(train), self.batch_size):
            index = order[start:start + self.batch_size]
            loss, stats = self.step(train.ids[index], train.labels[index], epoch)
            losses.append(loss)
            weights.append(index.size)
            totals.rows += stats.rows
            totals.erased += stats.erased
            totals.clamped += stats.clamped
        return float(np.average(losses, weights=weights)), totals

    def scores(self, dataset: EncodedDataset) -> np.ndarray:
        """Logits of a split, scored in batches"""
        out = np.empty(len(dataset))
        for start in range(0, len(dataset), self.batch_size):
            stop = start + self.batch_size
            batch = SparseBatch.from_ids(dataset.ids[start:stop], self.data.vocab.n)
            out[start:stop], _ = self.model.forward(self.regime.gather(batch), batch.local_ids)
        return out

    def evaluate(self, dataset: EncodedDataset) -> Tuple[float, Optional[float]]:
        """Logloss and AUC of a split, AUC is None for single-class splits"""
        logits = self.scores(dataset)
        loss, _ = mean_logloss(logits, dataset.labels)
        try:
            value = auc(logits, dataset.labels)
        except UndefinedMetricError as err:
            log_warn("AUC undefined: {!s}".format(err))
            value = None
        return loss, value

    def _record(self, epoch: int, split_name: str, loss: float, auc_value: Optional[float],
                stats: Optional[UpdateStats] = None) -> MetricRecord:
        footprint = self.regime.footprint()
        deltas = self.regime.delta_stats()
        return MetricRecord(
            self.run_id, epoch, self.iteration, split_name, float(loss), auc_value, footprint.training_ratio,
            footprint.inference_ratio, stats.erased if stats else 0, stats.clamped if stats else 0,
            *(deltas if deltas is not None else (None, None, None)))

    def _check_storage(self):
        table = getattr(self.regime, 'table', None)
        if table is not None:
            table.check_invariants()
            self.regime.ledger.check_transient(self.batch_size * self.model_config.n_fields * self.model_config.dim)

    def run(self, out_dir: Optional[str] = None) -> TrainResult:
        """Train until the epoch budget or early stopping, then score the test split with the best state"""
        if out_dir is not None:
            ensure_dir(out_dir)
            self.metrics_file = os.path.join(out_dir, 'metrics.jsonl')
            with open(self.metrics_file, 'w'):
                pass
            manifest = dict(self.config.get())
            manifest[RUN_SECTION] = {'version': self.version, 'run_id': self.run_id}
            dump_dict_to_file(os.path.join(out_dir, 'manifest.yml'), manifest)
        log_info("Run {0}: {1} on {2} feature(s), {3} training sample(s)".format(
            self.run_id, self.settings.kind.value, self.data.vocab.n, len(self.data.train)))

        best_loss, best_auc, best_epoch, best_state = np.inf, None, 0, None
        bad_epochs, epoch, stopped_early = 0, 0, False
        wall: List[float] = []
        for epoch in range(1, self.epochs + 1):
            started = time.perf_counter()
            train_loss, stats = self.train_epoch(epoch)
            self._check_storage()
            self.emit(self._record(epoch, 'train', train_loss, None, stats))
            val_loss, val_auc = self.evaluate(self.data.validation)
            self.emit(self._record(epoch, 'validation', val_loss, val_auc))
            wall.append(time.perf_counter() - started)
            log_debug("Epoch {0}: train {1:.6f}, validation {2:.6f}".format(epoch, train_loss, val_loss))
            if val_loss < best_loss:
                best_loss, best_auc, best_epoch = val_loss, val_auc, epoch
                best_state = (self.regime.snapshot(), {k: v.copy() for k, v in self.model.params.items()})
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= self.patience:
                    log_info("No validation improvement for {0} epoch(s), stopping".format(bad_epochs))
                    stopped_early = True
                    break

        if best_state is None:
            raise NumericFailure("validation logloss never became finite")
        self.regime.restore(best_state[0])
        self.model.set_params(best_state[1])
        test_loss, test_auc = self.evaluate(self.data.test)
        self.emit(self._record(best_epoch, 'test', test_loss, test_auc))
        runtime = {'epoch_seconds': [round(x, 3) for x in wall], 'peak_rss_mb': round(memory_rss_mb(), 1),
                   'peak_transient_fp': self.regime.ledger.peak_transient_fp,
                   'persistent_fp': self.regime.ledger.persistent_fp,
                   'optimizer_fp': self.regime.ledger.optimizer_fp, 'shadow_free': self.regime.ledger.shadow_free}
        if self.settings.kind.is_quantized_storage and not self.regime.ledger.shadow_free:
            log_warn("Optimizer state holds {0} full-precision value(s) next to the quantized table".format(
                self.regime.ledger.optimizer_fp))
        if out_dir is not None:
            self.save_checkpoint(out_dir)
            dump_dict_to_file(os.path.join(out_dir, 'runtime.yml'), runtime)
        log_ok("Best validation logloss {0:.6f} at epoch {1}, test logloss {2:.6f}".format(best_loss, best_epoch,
                                                                                           test_loss))
        return TrainResult(self.run_id, self.records, epoch, best_epoch, float(best_loss), best_auc,
                           float(test_loss), test_auc, self.regime.footprint(), stopped_early, runtime)

    def save_checkpoint(self, out_dir) -> bool:
        """Write the embedding table and the dense parameters"""
        table = self.regime.export_table()
        if table is None:
            np.save(os.path.join(out_dir, 'embeddings.npy'), self.regime.snapshot())
        else:
            table.dump(os.path.join(out_dir, 'embeddings.lpqe'))
        np.savez(os.path.join(out_dir, 'dense.npz'), **self.model.params)
        return True


def prepare_data(config: Config) -> PreparedData:
    """Preprocessed splits from `data.path`, or generated samples when no path is set"""
    path = config.get_attr('data.path')
    kind = config.get_attr('data.kind')
    if not path and kind != 'synth':
        raise ConfigError("data.kind {!r} needs data.path, see 'lpqe preprocess'".format(kind))
    if path:
        if not os.path.isdir(path):
            raise ConfigError("{} - no preprocessed data directory".format(path))
        return load_prepared(path)
    return synth_prepared(int(config.get_attr('data.synth.n_fields')), int(config.get_attr('data.synth.vocab_size')),
                          int(config.get_attr('data.synth.n_samples')), float(config.get_attr('data.synth.signal')),
                          int(config.get_attr('train.seed')), int(config.get_attr('data.threshold') or 1))


def run_sweep(config: Config, data: PreparedData, delta_lrs: Sequence[float], grad_scales: Sequence[str],
              out_dir: Optional[str] = None, version: str = '') -> pd.DataFrame:
    """Best validation metrics over a grid of step size learning rates and gradient scales"""
    rows = []
    for delta_lr in delta_lrs:
        for grad_scale in grad_scales:
            cell = Config(data=config.get())
            cell.set_attr('optim.delta_lr', float(delta_lr))
            cell.set_attr('regime.grad_scale', grad_scale)
            cell.validate()
            log_info("Sweep cell delta_lr={0!r}, grad_scale={1}".format(delta_lr, grad_scale))
            result = Trainer(cell, data, version).run()
            rows.append({'delta_lr': float(delta_lr), 'grad_scale': grad_scale, 'run_id': result.run_id,
                         'best_epoch': result.best_epoch, 'val_logloss': result.best_logloss,
                         'val_auc': result.best_auc, 'test_logloss': result.test_logloss,
                         'test_auc': result.test_auc})
    table = pd.DataFrame(rows, columns=['delta_lr', 'grad_scale', 'run_id', 'best_epoch', 'val_logloss', 'val_auc',
                                        'test_logloss', 'test_auc'])
    if out_dir is not None:
        ensure_dir(out_dir)
        table.to_csv(os.path.join(out_dir, 'sweep.csv'), index=False)
    return table
