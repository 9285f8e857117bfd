"""
Optimizers and learning rate schedules
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from lpqe.errors import DomainError, InvalidParameterError
from lpqe.utils.states import ScheduleMode


@dataclass(frozen=True)
class Schedule:
    """Base learning rate and its decay rule"""
    base_lr: float
    mode: ScheduleMode = ScheduleMode.CONSTANT
    milestones: Tuple[int, ...] = (6, 9)
    factor: float = 0.1

    def lr_at(self, t: int) -> float:
        """Learning rate at iteration t (inverse-sqrt) or epoch t (epoch-decay), t >= 1"""
        return lr_at(self, t)

    def lr_for(self, step: int, epoch: int) -> float:
        """Learning rate using the clock the mode runs on"""
        if self.mode is ScheduleMode.EPOCH_DECAY:
            return lr_at(self, epoch)
        return lr_at(self, step)

    def scaled(self, base_lr: float) -> 'Schedule':
        """Same decay rule with another base rate"""
        return Schedule(base_lr, self.mode, self.milestones, self.factor)


def lr_at(schedule: Schedule, t: int) -> float:
    """Evaluate a schedule at t >= 1"""
    if t < 1:
        raise DomainError("schedule clock starts at 1, got {!r}".format(t))
    if schedule.mode is ScheduleMode.INVERSE_SQRT:
        return schedule.base_lr / np.sqrt(t)
    if schedule.mode is ScheduleMode.EPOCH_DECAY:
        passed = sum(1 for milestone in schedule.milestones if t > milestone)
        return schedule.base_lr * schedule.factor ** passed
    return schedule.base_lr


def sgd_step(params, grads, lr: float, weight_decay: float = 0.0):
    """p - lr * (g + weight_decay * p)"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise InvalidParameterError("shape mismatch {0!r} vs {1!r}".format(params.shape, grads.shape))
    if weight_decay:
        grads = grads + weight_decay * params
    return params - lr * grads


@dataclass
class AdamState:
    """Moment accumulators of one parameter"""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0


def adam_step(state: AdamState, params, grads, lr: float, weight_decay: float = 0.0):
    """Bias-corrected Adam with L2 weight decay folded into the gradient"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise InvalidParameterError("shape mismatch {0!r} vs {1!r}".format(params.shape, grads.shape))
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    if state.m.shape != params.shape:
        raise InvalidParameterError("Adam state shaped {0!r} for parameter {1!r}".format(state.m.shape,
                                                                                       params.shape))
    if weight_decay:
        grads = grads + weight_decay * params
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


class RowSgd:
    """Plain SGD over embedding rows"""

    def __init__(self, weight_decay: float = 0.0):
        """Initialise all attributes"""
        self.weight_decay: float = weight_decay

    @property
    def state_size(self) -> int:
        return 0

    def step_rows(self, rows: np.ndarray, weights: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
        """Updated copies of the given rows"""
        return sgd_step(weights, grads, lr, self.weight_decay)


class SparseAdam:
    """Adam over embedding rows, moments allocated only for rows seen in a batch"""

    def __init__(self, n: int, d: int, weight_decay: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        """Initialise all attributes"""
        self.n: int = n
        self.d: int = d
        self.weight_decay: float = weight_decay
        self.beta1: float = beta1
        self.beta2: float = beta2
        self.eps: float = eps
        self.step: int = 0
        self._slot: np.ndarray = np.full(n, -1, dtype=np.int64)
        self._m: np.ndarray = np.zeros((0, d))
        self._v: np.ndarray = np.zeros((0, d))
        self._used: int = 0

    @property
    def allocated_rows(self) -> int:
        return self._used

    @property
    def state_size(self) -> int:
        """Full-precision moment values held for the rows seen so far"""
        return 2 * self._used * self.d

    def _slots(self, rows: np.ndarray) -> np.ndarray:
        fresh = rows[self._slot[rows] < 0]
        if fresh.size:
            need = self._used + fresh.size
            if need > self._m.shape[0]:
                capacity = max(need, 2 * self._m.shape[0], 64)
                self._m = np.concatenate([self._m, np.zeros((capacity - self._m.shape[0], self.d))])
                self._v = np.concatenate([self._v, np.zeros((capacity - self._v.shape[0], self.d))])
            self._slot[fresh] = np.arange(self._used, need)
            self._used = need
        return self._slot[rows]

    def step_rows(self, rows: np.ndarray, weights: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
        """Updated copies of the given rows"""
        rows = np.asarray(rows, dtype=np.int64)
        grads = np.asarray(grads, dtype=np.float64)
        if self.weight_decay:
            grads = grads + self.weight_decay * weights
        self.step += 1
        slots = self._slots(rows)
        m = self.beta1 * self._m[slots] + (1.0 - self.beta1) * grads
        v = self.beta2 * self._v[slots] + (1.0 - self.beta2) * (grads * grads)
        self._m[slots] = m
        self._v[slots] = v
        m_hat = m / (1.0 - self.beta1 ** self.step)
        v_hat = v / (1.0 - self.beta2 ** self.step)
        return weights - lr * m_hat / (np.sqrt(v_hat) + self.eps)


class DenseOptimizer:
    """SGD or Adam over named dense parameters, updated in place"""

    def __init__(self, name: str = 'adam', weight_decay: float = 0.0):
        """Initialise all attributes"""
        if name not in ('sgd', 'adam'):
            raise InvalidParameterError("unknown optimizer {!r}".format(name))
        self.name: str = name
        self.weight_decay: float = weight_decay
        self.states: Dict[str, AdamState] = {}

    @property
    def state_size(self) -> int:
        return sum(state.m.size + state.v.size for state in self.states.values() if state.m is not None)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float):
        """Apply one update to every parameter that has a gradient"""
        for key in sorted(grads):
            if self.name == 'sgd':
                params[key] = sgd_step(params[key], grads[key], lr, self.weight_decay)
            else:
                state = self.states.setdefault(key, AdamState())
                params[key] = adam_step(state, params[key], grads[key], lr, self.weight_decay)
        return params


def make_row_optimizer(name: str, n: int, d: int, weight_decay: float = 0.0):
    """Row optimizer for embeddings or feature-wise step sizes"""
    if name == 'sgd':
        return RowSgd(weight_decay)
    if name == 'adam':
        return SparseAdam(n, d, weight_decay)
    raise InvalidParameterError("unknown optimizer {!r}".format(name))

