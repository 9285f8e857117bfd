"""
Small CTR predictor over gathered embeddings with closed-form gradients
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from lpqe.errors import FeatureIndexError, InvalidParameterError, StaleTapeError, UndefinedMetricError
from lpqe.quant.rng import RngStream
from lpqe.utils.states import HeadKind


@dataclass(frozen=True)
class ModelConfig:
    """Head type and input geometry"""
    head: HeadKind
    n_fields: int
    dim: int
    bias: float = 0.0


@dataclass
class ForwardTape:
    """Intermediates kept by forward for an exact backward pass"""
    head: HeadKind
    local_ids: np.ndarray
    n_rows: int
    emb: np.ndarray
    pooled: np.ndarray
    bias: float
    v: Optional[np.ndarray]
    generation: int
    logits: np.ndarray

    def replay(self) -> np.ndarray:
        """Recompute the logits from the cached intermediates"""
        return _logits(self.head, self.emb, self.pooled, self.bias, self.v)


def _logits(head: HeadKind, emb: np.ndarray, pooled: np.ndarray, bias: float, v: Optional[np.ndarray]):
    if head is HeadKind.LINEAR_SUM:
        return bias + pooled @ v
    interactions = 0.5 * (pooled * pooled - np.einsum('bfk,bfk->bk', emb, emb))
    return bias + interactions.sum(axis=1)


def aggregate_row_grads(local_ids: np.ndarray, slot_grads: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum (sample, field) gradients into one gradient per gathered row"""
    row_grads = np.zeros((n_rows, slot_grads.shape[-1]))
    np.add.at(row_grads, local_ids.reshape(-1), slot_grads.reshape(-1, slot_grads.shape[-1]))
    return row_grads


class CtrModel:
    """Linear-sum or factorization-machine head with dense parameters"""

    def __init__(self, config: ModelConfig, rng: Optional[RngStream] = None):
        """Initialise all attributes"""
        if config.n_fields < 1 or config.dim < 1:
            raise InvalidParameterError("model needs at least one field and one dimension")
        self.config: ModelConfig = config
        self.params: Dict[str, np.ndarray] = {'bias': np.array([float(config.bias)])}
        if config.head is HeadKind.LINEAR_SUM:
            if rng is None:
                self.params['v'] = np.full(config.dim, 1.0 / np.sqrt(config.dim))
            else:
                self.params['v'] = (rng.uniform(config.dim) * 2.0 - 1.0) / np.sqrt(config.dim)
        self.generation: int = 0

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"CtrModel(head={0}, fields={1}, dim={2})".format(self.config.head.value, self.config.n_fields,
                                                                  self.config.dim)

    def touch(self):
        """Mark dense parameters as changed, outstanding tapes become stale"""
        self.generation += 1

    def set_params(self, params: Dict[str, np.ndarray]):
        self.params = {key: np.array(value, dtype=np.float64) for key, value in params.items()}
        self.touch()

    def forward(self, gathered: np.ndarray, local_ids: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
        """Logits for samples whose field slots index rows of `gathered`"""
        gathered = np.asarray(gathered, dtype=np.float64)
        local_ids = np.asarray(local_ids, dtype=np.int64)
        if local_ids.ndim != 2 or local_ids.shape[1] != self.config.n_fields:
            raise InvalidParameterError("each sample must supply exactly {0} field ids".format(
                self.config.n_fields))
        if local_ids.size and (local_ids.min() < 0 or local_ids.max() >= gathered.shape[0]):
            raise FeatureIndexError("sample references an embedding row that was not gathered")
        emb = gathered[local_ids]
        pooled = emb.sum(axis=1)
        bias = float(self.params['bias'][0])
        v = self.params.get('v')
        logits = _logits(self.config.head, emb, pooled, bias, v)
        tape = ForwardTape(self.config.head, local_ids, gathered.shape[0], emb, pooled, bias,
                           None if v is None else v.copy(), self.generation, logits)
        return logits, tape

    def backward(self, tape: ForwardTape, dlogit: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """Gradients w.r.t. gathered rows and dense parameters"""
        if tape.generation != self.generation:
            raise StaleTapeError("tape recorded at generation {0}, model is at {1}".format(tape.generation,
                                                                                        self.generation))
        dlogit = np.asarray(dlogit, dtype=np.float64).reshape(-1)
        dense = {'bias': np.array([dlogit.sum()])}
        if tape.head is HeadKind.LINEAR_SUM:
            slot_grads = np.broadcast_to(dlogit[:, None, None] * tape.v[None, None, :], tape.emb.shape)
            dense['v'] = dlogit @ tape.pooled
        else:
            slot_grads = dlogit[:, None, None] * (tape.pooled[:, None, :] - tape.emb)
        return aggregate_row_grads(tape.local_ids, slot_grads, tape.n_rows), dense


def logloss(logit, label):
    """Binary cross-entropy on logits and its derivative, stable for large |logit|"""
    logit = np.asarray(logit, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if np.any((label != 0) & (label != 1)):
        raise InvalidParameterError("labels must be 0 or 1")
    loss = -(label * log_expit(logit) + (1.0 - label) * log_expit(-logit))
    dlogit = expit(logit) - label
    if loss.ndim == 0:
        return float(loss), float(dlogit)
    return loss, dlogit


def mean_logloss(logits, labels) -> Tuple[float, np.ndarray]:
    """Batch-mean loss and the per-sample gradient of the mean"""
    loss, dlogit = logloss(logits, labels)
    count = max(int(np.size(loss)), 1)
    return float(np.sum(loss) / count), np.asarray(dlogit) / count


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative, ties counting one half"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method='average')
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(logits, labels) -> Tuple[float, float]:
    """Mean logloss and AUC of a scored split"""
    loss, _ = mean_logloss(logits, labels)
    return loss, auc(logits, labels)
