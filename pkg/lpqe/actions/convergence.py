"""
Convergence lab: coordinate-wise SGD on f(w) = (w - target)^2 under full precision,
deterministic and stochastic rounding, plus the error-bound evaluators it is checked against
"""
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from lpqe.errors import BoundViolation, InvalidParameterError, InvariantViolation, LemmaViolation
from lpqe.quant.core import QuantSpec, quantize_codes
from lpqe.quant.rng import STREAM_LAB, RngStream
from lpqe.train.optim import Schedule
from lpqe.utils.common import dump_json_lines, ensure_dir, log_info, log_ok, log_warn
from lpqe.utils.states import LabRegime, RoundingMode, ScheduleMode

SNAPSHOTS = (10, 100, 1000)
HISTOGRAM_BINS = 50
TARGET = 0.5
# relative and absolute slack for float comparisons against exact bounds
REL_TOL = 1e-9
ABS_TOL = 1e-18

LAB_ROUNDING = {
    LabRegime.LPT_DR: RoundingMode.DETERMINISTIC,
    LabRegime.LPT_SR: RoundingMode.STOCHASTIC,
}


@dataclass(frozen=True)
class ConvexProblemSpec:
    """Synthetic quadratic problem and the quantizer it is trained under"""
    n_params: int = 1000
    delta: float = 0.01
    bits: int = 8
    eta: float = 1.0
    schedule_mode: ScheduleMode = ScheduleMode.INVERSE_SQRT
    d: int = 1
    target: float = TARGET

    def __post_init__(self):
        if self.n_params < 1 or self.d < 1:
            raise InvalidParameterError("problem needs at least one parameter")
        if self.eta <= 0:
            raise InvalidParameterError("learning rate must be positive, got {!r}".format(self.eta))
        if not self.quant.real_min <= self.target <= self.quant.real_max:
            raise InvalidParameterError("target {0!r} outside the representable range [{1}, {2}]".format(
                self.target, self.quant.real_min, self.quant.real_max))

    @property
    def quant(self) -> QuantSpec:
        return QuantSpec(self.bits, self.delta)

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.eta, self.schedule_mode)

    @property
    def target_on_grid(self) -> bool:
        """True if the optimum is a representable value"""
        codes = self.target / self.delta
        return bool(abs(codes - np.round(codes)) < 1e-9)

    @property
    def diameter(self) -> float:
        """D over the representable range"""
        return float(np.sqrt(self.d) * (self.quant.real_max - self.quant.real_min))

    @property
    def grad_bound(self) -> float:
        """G, the largest gradient norm over the representable range"""
        reach = max(abs(self.quant.real_min - self.target), abs(self.quant.real_max - self.target))
        return float(np.sqrt(self.d) * 2.0 * reach)

    def bound_params(self) -> 'BoundParams':
        return BoundParams(self.diameter, self.grad_bound, self.d, self.eta, self.delta)


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the error bounds"""
    D: float
    G: float
    d: int
    eta: float
    delta: float

    def __post_init__(self):
        if self.D < 0 or self.G < 0 or self.d < 1 or self.eta <= 0 or self.delta < 0:
            raise InvalidParameterError("bound parameters must be positive (delta may be zero)")

    @property
    def t0(self) -> int:
        """Iteration where deterministic rounding stops tracking the gradient, floor(2 eta G / (sqrt(d) delta))"""
        if self.delta == 0:
            return 0
        # the slack keeps exact quotients such as 4 / 0.01 from flooring one below
        return int(np.floor(2.0 * self.eta * self.G / (np.sqrt(self.d) * self.delta) * (1.0 + 1e-12)))


@dataclass(frozen=True)
class Theorem2Bound:
    """Deterministic rounding bound split into its terms"""
    distance: float
    gradient: float
    floor: float
    early: float
    late: float

    @property
    def total(self) -> float:
        return self.distance + self.gradient + self.floor + self.early + self.late

    def as_dict(self):
        return {'distance': self.distance, 'gradient': self.gradient, 'floor': self.floor, 'early': self.early,
                'late': self.late, 'total': self.total}


def _check_horizon(T: int):
    if T < 1:
        raise InvalidParameterError("horizon must be at least 1, got {!r}".format(T))


def theorem1_rhs(params: BoundParams, T: int) -> float:
    """Stochastic rounding bound D^2/(2 eta sqrt T) + eta G^2/sqrt T + sqrt(d) delta G / 2"""
    _check_horizon(T)
    root = np.sqrt(T)
    return float(params.D ** 2 / (2.0 * params.eta * root) + params.eta * params.G ** 2 / root
                 + np.sqrt(params.d) * params.delta * params.G / 2.0)


def theorem2_rhs(params: BoundParams, T: int) -> Theorem2Bound:
    """Deterministic rounding bound, its early sum runs to min(T, T0) and its late sum over t > T0"""
    _check_horizon(T)
    root = np.sqrt(T)
    # without quantization T0 grows without bound and the late sum is empty
    t0 = params.t0 if params.delta > 0 else T
    early_sum = float(np.sqrt(np.arange(1, min(T, t0) + 1, dtype=np.float64)).sum())
    return Theorem2Bound(
        distance=float(params.D ** 2 / (2.0 * params.eta * root)),
        gradient=float(3.0 * params.eta * params.G ** 2 / root),
        floor=float(np.sqrt(params.d) * params.delta * params.G / 2.0),
        early=float(np.sqrt(params.d) * params.D * params.delta * early_sum / (2.0 * params.eta * T)),
        late=float(max(0, T - t0) * params.D * params.G / T),
    )


@dataclass
class Trajectory:
    """Iterates of one synthetic run

    weights[t] holds the parameters after t updates, weights[0] the (quantized)
    starting point. Row t-1 of residuals, grads and etas belongs to update t.
    """
    regime: LabRegime
    spec: ConvexProblemSpec
    seed: int
    weights: np.ndarray
    residuals: np.ndarray
    grads: np.ndarray
    etas: np.ndarray
    stagnant: np.ndarray

    @property
    def iterations(self) -> int:
        return int(self.etas.shape[0])

    def targets(self) -> np.ndarray:
        """Unquantized update targets w - eta * grad of every step"""
        return self.weights[:-1] - self.etas[:, None] * self.grads


def run_synthetic(regime: LabRegime, spec: ConvexProblemSpec, iterations: int, seed: int) -> Trajectory:
    """SGD from Uniform(0, 1) starting points, requantizing every step unless full precision"""
    _check_horizon(iterations)
    stream = RngStream(seed).child(STREAM_LAB)
    quant = spec.quant
    weights = np.empty((iterations + 1, spec.n_params))
    residuals = np.zeros((iterations, spec.n_params))
    grads = np.empty((iterations, spec.n_params))
    etas = np.empty(iterations)
    stagnant = np.empty(iterations, dtype=np.int64)

    w = stream.child(0).uniform(spec.n_params)
    rounding = LAB_ROUNDING.get(regime)
    rounding_stream = stream.child(1, list(LabRegime).index(regime))
    if rounding is not None:
        w = quant.delta * quantize_codes(w, quant.delta, quant.bits, rounding, rounding_stream.at(0))
    weights[0] = w
    for t in range(1, iterations + 1):
        eta = spec.schedule.lr_at(t)
        grad = 2.0 * (w - spec.target)
        target = w - eta * grad
        if rounding is None:
            w = target
        else:
            w = quant.delta * quantize_codes(target, quant.delta, quant.bits, rounding, rounding_stream.at(t))
            residuals[t - 1] = w - target
        weights[t] = w
        grads[t - 1] = grad
        etas[t - 1] = eta
        stagnant[t - 1] = np.count_nonzero(np.abs(eta * grad) < quant.delta / 2.0)
    return Trajectory(regime, spec, seed, weights, residuals, grads, etas, stagnant)


def suboptimality(trajectory: Trajectory, horizons: Iterable[int]) -> Dict[int, float]:
    """Mean over coordinates of f(average of the first T iterates), F(w*) being zero"""
    horizons = sorted(set(int(T) for T in horizons))
    if horizons and (horizons[0] < 1 or horizons[-1] > trajectory.iterations):
        raise InvalidParameterError("horizons must lie in [1, {0}]".format(trajectory.iterations))
    running = np.cumsum(trajectory.weights[:-1], axis=0)
    return {T: float(np.mean((running[T - 1] / T - trajectory.spec.target) ** 2)) for T in horizons}


@dataclass
class LemmaReport:
    """Worst measured-to-bound ratios of the quantization error checks"""
    coordinate_steps: int
    max_coordinate_ratio: float
    max_lemma1_ratio: float
    max_lemma2_ratio: float

    def as_dict(self):
        return {'coordinate_steps': self.coordinate_steps, 'max_coordinate_ratio': self.max_coordinate_ratio,
                'max_lemma1_ratio': self.max_lemma1_ratio, 'max_lemma2_ratio': self.max_lemma2_ratio}


def _exceeds(measured, bound) -> np.ndarray:
    return measured > bound * (1.0 + REL_TOL) + ABS_TOL


def _ratio(measured: np.ndarray, bound: np.ndarray) -> float:
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(bound > 0, measured / bound, np.where(measured > 0, np.inf, 0.0))
    return float(ratio.max()) if ratio.size else 0.0


def lemma_error_check(trajectory: Trajectory) -> LemmaReport:
    """Verify the quantization error bounds at every step of a rounded run

    Per coordinate r^2 <= delta^2/4 and r^2 <= (eta^t grad)^2. Averaged over the
    coordinates, r^2 <= sqrt(d) delta eta^t G and r^2 <= min(d delta^2/4, (eta^t G)^2).
    """
    if trajectory.regime not in LAB_ROUNDING:
        raise InvalidParameterError("error bounds apply to rounded runs only")
    spec = trajectory.spec
    delta, G, d = spec.delta, spec.grad_bound, spec.d
    r_sq = trajectory.residuals ** 2
    step_sq = (trajectory.etas[:, None] * trajectory.grads) ** 2
    half_step_sq = np.full_like(r_sq, delta ** 2 / 4.0)
    coordinate_bound = np.minimum(half_step_sq, step_sq)
    bad = np.argwhere(_exceeds(r_sq, coordinate_bound))
    if bad.size:
        t, i = bad[0]
        raise LemmaViolation("coordinate error", int(t) + 1, float(r_sq[t, i]), float(coordinate_bound[t, i]))

    mean_sq = r_sq.mean(axis=1)
    lemma1 = np.sqrt(d) * delta * trajectory.etas * G
    lemma2 = np.minimum(d * delta ** 2 / 4.0, (trajectory.etas * G) ** 2)
    for name, bound in (('mean error (lemma 1)', lemma1), ('mean error (lemma 2)', lemma2)):
        bad = np.flatnonzero(_exceeds(mean_sq, bound))
        if bad.size:
            t = int(bad[0])
            raise LemmaViolation(name, t + 1, float(mean_sq[t]), float(bound[t]))
    return LemmaReport(int(r_sq.size), _ratio(r_sq, coordinate_bound), _ratio(mean_sq, lemma1),
                       _ratio(mean_sq, lemma2))


def freeze_iteration(trajectory: Trajectory) -> Optional[int]:
    """First iteration where every update falls below half a step, None if never

    Raises if any parameter still moves after that iteration.
    """
    full = np.flatnonzero(trajectory.stagnant == trajectory.spec.n_params)
    if not full.size:
        return None
    t = int(full[0]) + 1
    if trajectory.regime is LabRegime.LPT_DR and np.any(trajectory.weights[t:] != trajectory.weights[t]):
        raise InvariantViolation("deterministic rounding moved a parameter after full stagnation at {}".format(t))
    return t


def residual_zscore(trajectory: Trajectory) -> float:
    """Pooled z statistic of the stochastic rounding residuals against a zero mean"""
    delta = trajectory.spec.delta
    scaled = trajectory.targets() / delta
    frac = scaled - np.floor(scaled)
    variance = float(np.sum(delta ** 2 * frac * (1.0 - frac)))
    total = float(np.sum(trajectory.residuals))
    if variance == 0.0:
        return 0.0 if total == 0.0 else float('inf')
    return total / np.sqrt(variance)


def histogram(weights: np.ndarray, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    """Counts over uniform bins of [0, 1]"""
    counts, edges = np.histogram(weights, bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({'bin_left': edges[:-1], 'count': counts})


@dataclass
class BoundReport:
    """Measured suboptimality of one run against its error bound"""
    regime: LabRegime
    seed: int
    T: int
    T0: int
    theorem1: float
    theorem2: Theorem2Bound
    measured: float
    residual_sq: List[float] = field(default_factory=list)

    @property
    def bound(self) -> float:
        """Bound that applies to the run's rounding"""
        if self.regime is LabRegime.LPT_SR:
            return self.theorem1
        return self.theorem2.total

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound

    def as_dict(self):
        return {'regime': self.regime.value, 'seed': self.seed, 'T': self.T, 'T0': self.T0,
                'theorem1': self.theorem1, 'theorem2': self.theorem2.as_dict(), 'measured': self.measured,
                'bound': self.bound, 'holds': self.holds, 'residual_sq': self.residual_sq}


def bound_reports(trajectory: Trajectory, horizons: Iterable[int]) -> List[BoundReport]:
    """One report per horizon, empty for full precision runs"""
    if trajectory.regime not in LAB_ROUNDING:
        return []
    params = trajectory.spec.bound_params()
    measured = suboptimality(trajectory, horizons)
    mean_sq = (trajectory.residuals ** 2).mean(axis=1)
    return [BoundReport(trajectory.regime, trajectory.seed, T, params.t0, theorem1_rhs(params, T),
                        theorem2_rhs(params, T), value, [float(x) for x in mean_sq[:T]])
            for T, value in measured.items()]


def check_bounds(reports: Iterable[BoundReport]):
    """Raise on the first report whose measured value exceeds its bound"""
    for report in reports:
        if not report.holds:
            raise BoundViolation("{0} bound (seed {1})".format(report.regime.value, report.seed), report.T,
                                 report.measured, report.bound)


@dataclass
class LabSummary:
    """Everything a lab sweep produces"""
    spec: ConvexProblemSpec
    iterations: int
    seeds: List[int]
    horizons: List[int]
    suboptimality: Dict[LabRegime, List[Dict[int, float]]] = field(default_factory=dict)
    reports: List[BoundReport] = field(default_factory=list)
    lemmas: Dict[LabRegime, List[LemmaReport]] = field(default_factory=dict)
    freeze: Dict[LabRegime, List[Optional[int]]] = field(default_factory=dict)
    zscores: List[float] = field(default_factory=list)
    snapshots: List[Dict] = field(default_factory=list)
    histograms: Dict[str, pd.DataFrame] = field(default_factory=dict)
    stagnation: Dict[LabRegime, np.ndarray] = field(default_factory=dict)

    def mean_suboptimality(self, regime: LabRegime, T: int) -> float:
        return float(np.mean([values[T] for values in self.suboptimality[regime]]))

    def rounding_gap(self) -> Optional[float]:
        """Deterministic minus stochastic mean suboptimality at the last horizon, None unless both ran"""
        if LabRegime.LPT_DR not in self.suboptimality or LabRegime.LPT_SR not in self.suboptimality:
            return None
        T = self.horizons[-1]
        return self.mean_suboptimality(LabRegime.LPT_DR, T) - self.mean_suboptimality(LabRegime.LPT_SR, T)


def run_lab(spec: ConvexProblemSpec, regimes: Sequence[LabRegime], iterations: int, seeds: Sequence[int],
            horizons: Sequence[int] = SNAPSHOTS, strict: bool = True) -> LabSummary:
    """Run every regime for every seed, collecting bounds, error checks and plot data

    Histograms and stagnation series come from the first seed. With `strict` a
    broken bound raises instead of only being reported.
    """
    horizons = [T for T in horizons if T <= iterations] or [iterations]
    summary = LabSummary(spec, iterations, list(seeds), horizons)
    for regime in regimes:
        log_info("Running {0} for {1} seed(s), {2} iterations".format(regime.value, len(seeds), iterations))
        summary.suboptimality[regime] = []
        for index, seed in enumerate(seeds):
            trajectory = run_synthetic(regime, spec, iterations, seed)
            values = suboptimality(trajectory, horizons)
            summary.suboptimality[regime].append(values)
            reports = bound_reports(trajectory, horizons)
            if strict:
                check_bounds(reports)
            summary.reports.extend(reports)
            if regime is LabRegime.LPT_DR:
                summary.lemmas.setdefault(regime, []).append(lemma_error_check(trajectory))
            if regime is LabRegime.LPT_SR:
                summary.zscores.append(residual_zscore(trajectory))
            if regime in LAB_ROUNDING:
                summary.freeze.setdefault(regime, []).append(freeze_iteration(trajectory))
            for T in horizons:
                snapshot = trajectory.weights[T]
                summary.snapshots.append({'regime': regime.value, 'seed': seed, 't': T,
                                          'mean': float(snapshot.mean()), 'std': float(snapshot.std()),
                                          'suboptimality': values[T],
                                          'stagnant': int(trajectory.stagnant[T - 1])})
                if index == 0:
                    summary.histograms['{0}_t{1}'.format(regime.value, T)] = histogram(snapshot)
            if index == 0:
                summary.stagnation[regime] = trajectory.stagnant.copy()
    gap = summary.rounding_gap()
    if gap is not None and gap <= 0:
        log_warn("Deterministic rounding did not trail stochastic rounding at T={0} (gap {1:.3e}), target {2} {3}"
                 .format(summary.horizons[-1], gap, spec.target,
                         "lies on the grid" if spec.target_on_grid else "is off the grid"))
    log_ok("Lab finished, {0} bound report(s)".format(len(summary.reports)))
    return summary


def export_lab(summary: LabSummary, out_dir) -> bool:
    """Write snapshots, bound reports, histogram and stagnation CSVs"""
    ensure_dir(out_dir)
    hist_dir = os.path.join(out_dir, 'histograms')
    ensure_dir(hist_dir)
    for name, frame in sorted(summary.histograms.items()):
        frame.to_csv(os.path.join(hist_dir, name + '.csv'), index=False)
    for regime, counts in summary.stagnation.items():
        frame = pd.DataFrame({'iteration': np.arange(1, counts.size + 1), 'count': counts})
        frame.to_csv(os.path.join(out_dir, 'stagnation_{}.csv'.format(regime.value)), index=False)
    if not dump_json_lines(os.path.join(out_dir, 'snapshots.jsonl'), summary.snapshots):
        return False
    return dump_json_lines(os.path.join(out_dir, 'bounds.jsonl'), [r.as_dict() for r in summary.reports])
