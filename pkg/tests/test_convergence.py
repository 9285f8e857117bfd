"""Convergence lab: error bound evaluators and the synthetic quadratic experiment"""
import json
import os

import numpy as np
import pytest

from lpqe.actions.convergence import (BoundParams, ConvexProblemSpec, export_lab, freeze_iteration, lemma_error_check,
                                      residual_zscore, run_lab, run_synthetic, suboptimality, theorem1_rhs,
                                      theorem2_rhs, bound_reports)
from lpqe.errors import InvalidParameterError
from lpqe.utils.states import LabRegime

SEEDS = (0, 1, 2)
# small base rate keeps the iterates away from the optimum long enough to separate the regimes
SLOW = ConvexProblemSpec(eta=0.01)


@pytest.fixture(scope='module')
def slow_runs():
    return {regime: [run_synthetic(regime, SLOW, 1000, seed) for seed in SEEDS] for regime in LabRegime}


def mean_suboptimality(runs, T):
    return float(np.mean([suboptimality(run, [T])[T] for run in runs]))


class TestBounds:

    def test_t0(self):
        assert BoundParams(D=1.0, G=2.0, d=1, eta=1.0, delta=0.01).t0 == 400

    def test_representable_range(self):
        spec = ConvexProblemSpec()
        assert spec.diameter == pytest.approx(2.55)
        assert spec.grad_bound == pytest.approx(3.56)

    def test_theorem1(self):
        params = BoundParams(D=2.0, G=3.0, d=4, eta=0.5, delta=0.01)
        expected = 4.0 / (2 * 0.5 * 10) + 0.5 * 9.0 / 10 + 2 * 0.01 * 3.0 / 2
        assert theorem1_rhs(params, 100) == pytest.approx(expected)

    def test_theorem2_terms(self):
        params = BoundParams(D=2.0, G=3.0, d=1, eta=1.0, delta=1.0)
        assert params.t0 == 6
        bound = theorem2_rhs(params, 9)
        assert bound.distance == pytest.approx(4.0 / 6)
        assert bound.gradient == pytest.approx(3 * 9.0 / 3)
        assert bound.floor == pytest.approx(1.5)
        assert bound.early == pytest.approx(2.0 * np.sqrt(np.arange(1, 7)).sum() / 18)
        assert bound.late == pytest.approx(3 * 2.0 * 3.0 / 9)

    def test_theorem2_before_t0(self):
        bound = theorem2_rhs(BoundParams(D=2.0, G=3.0, d=1, eta=1.0, delta=1.0), 4)
        assert bound.late == 0.0

    def test_zero_delta_is_classic_sgd(self):
        params = BoundParams(D=2.0, G=3.0, d=1, eta=1.0, delta=0.0)
        assert params.t0 == 0
        bound = theorem2_rhs(params, 100)
        assert bound.total == pytest.approx(4.0 / 20 + 3 * 9.0 / 10)
        assert theorem1_rhs(params, 100) == pytest.approx(4.0 / 20 + 9.0 / 10)

    @pytest.mark.parametrize('T', [1, 10, 400, 401, 1000, 10 ** 5])
    def test_deterministic_bound_dominates(self, T):
        params = ConvexProblemSpec().bound_params()
        assert theorem2_rhs(params, T).total >= theorem1_rhs(params, T)

    def test_late_term_tends_to_dg(self):
        params = BoundParams(D=2.0, G=3.0, d=1, eta=1.0, delta=1.0)
        assert theorem2_rhs(params, 10 ** 7).late == pytest.approx(6.0, rel=1e-5)

    def test_horizon(self):
        with pytest.raises(InvalidParameterError):
            theorem1_rhs(ConvexProblemSpec().bound_params(), 0)


class TestSyntheticRuns:

    def test_shapes(self):
        run = run_synthetic(LabRegime.LPT_SR, ConvexProblemSpec(n_params=10), 20, 0)
        assert run.weights.shape == (21, 10)
        assert run.residuals.shape == (20, 10)
        assert run.iterations == 20

    def test_rounded_iterates_stay_on_grid(self):
        run = run_synthetic(LabRegime.LPT_SR, ConvexProblemSpec(n_params=50), 50, 3)
        codes = run.weights / 0.01
        np.testing.assert_allclose(codes, np.round(codes), atol=1e-9)

    def test_replay(self):
        first = run_synthetic(LabRegime.LPT_SR, ConvexProblemSpec(n_params=100), 100, 7)
        second = run_synthetic(LabRegime.LPT_SR, ConvexProblemSpec(n_params=100), 100, 7)
        np.testing.assert_array_equal(first.weights, second.weights)

    def test_deterministic_rounding_freezes(self):
        for seed in range(20):
            run = run_synthetic(LabRegime.LPT_DR, ConvexProblemSpec(), 1000, seed)
            t = freeze_iteration(run)
            assert t is not None and t <= 15
            assert run.stagnant[-1] == 1000

    def test_full_precision_has_no_residuals(self):
        run = run_synthetic(LabRegime.FP, ConvexProblemSpec(n_params=10), 10, 0)
        assert not np.any(run.residuals)

    def test_stochastic_beats_deterministic(self, slow_runs):
        sr = mean_suboptimality(slow_runs[LabRegime.LPT_SR], 1000)
        dr = mean_suboptimality(slow_runs[LabRegime.LPT_DR], 1000)
        fp = mean_suboptimality(slow_runs[LabRegime.FP], 1000)
        assert dr > sr
        assert sr <= 2.0 * fp

    def test_stochastic_residuals_are_unbiased(self, slow_runs):
        for run in slow_runs[LabRegime.LPT_SR]:
            assert abs(residual_zscore(run)) <= 4.0


class TestOffGridTarget:
    """Optimum between two grid points at the default inverse-sqrt schedule"""

    SPEC = ConvexProblemSpec(target=0.503)

    def test_deterministic_rounding_trails_stochastic(self):
        runs = {regime: [run_synthetic(regime, self.SPEC, 1000, seed) for seed in range(5)] for regime in LabRegime}
        dr = mean_suboptimality(runs[LabRegime.LPT_DR], 1000)
        sr = mean_suboptimality(runs[LabRegime.LPT_SR], 1000)
        assert dr > sr
        assert dr == pytest.approx(0.003 ** 2, rel=0.1)
        for run in runs[LabRegime.LPT_DR]:
            np.testing.assert_allclose(run.weights[-1], 0.5)

    def test_bounds_hold(self):
        for regime in (LabRegime.LPT_DR, LabRegime.LPT_SR):
            for report in bound_reports(run_synthetic(regime, self.SPEC, 1000, 0), [10, 100, 1000]):
                assert report.holds

    def test_grid_membership(self):
        assert ConvexProblemSpec().target_on_grid
        assert not self.SPEC.target_on_grid
        assert self.SPEC.grad_bound == pytest.approx(2 * (0.503 + 1.28))

    def test_target_must_be_representable(self):
        with pytest.raises(InvalidParameterError):
            ConvexProblemSpec(target=2.0)

    def test_lab_reports_the_gap(self):
        off = run_lab(ConvexProblemSpec(n_params=200, target=0.503), list(LabRegime), 100, [0, 1])
        assert off.rounding_gap() > 0
        on = run_lab(ConvexProblemSpec(n_params=200), [LabRegime.FP], 100, [0])
        assert on.rounding_gap() is None


class TestErrorChecks:

    def test_lemmas_hold_over_a_million_coordinate_steps(self):
        report = lemma_error_check(run_synthetic(LabRegime.LPT_DR, ConvexProblemSpec(), 1000, 0))
        assert report.coordinate_steps >= 10 ** 6
        assert report.max_coordinate_ratio <= 1.0 + 1e-9

    def test_lemmas_need_rounding(self):
        with pytest.raises(InvalidParameterError):
            lemma_error_check(run_synthetic(LabRegime.FP, ConvexProblemSpec(n_params=5), 5, 0))

    def test_full_precision_has_no_bound_report(self):
        run = run_synthetic(LabRegime.FP, ConvexProblemSpec(n_params=5), 10, 0)
        assert bound_reports(run, [10]) == []

    def test_bounds_hold(self):
        for regime in (LabRegime.LPT_DR, LabRegime.LPT_SR):
            for seed in SEEDS:
                for report in bound_reports(run_synthetic(regime, ConvexProblemSpec(), 1000, seed), [10, 100, 1000]):
                    assert report.holds


class TestLab:

    def test_run_and_export(self, tmp_path):
        spec = ConvexProblemSpec(n_params=200)
        summary = run_lab(spec, list(LabRegime), 100, [0, 1])
        assert summary.horizons == [10, 100]
        assert len(summary.reports) == 2 * 2 * 2
        assert all(report.holds for report in summary.reports)
        assert export_lab(summary, str(tmp_path))
        assert os.path.isfile(os.path.join(str(tmp_path), 'histograms', 'lpt-dr_t10.csv'))
        assert os.path.isfile(os.path.join(str(tmp_path), 'stagnation_lpt-dr.csv'))
        with open(os.path.join(str(tmp_path), 'bounds.jsonl')) as in_f:
            records = [json.loads(line) for line in in_f]
        assert len(records) == 8
        assert records[0]['holds'] is True

    def test_full_precision_only(self):
        summary = run_lab(ConvexProblemSpec(n_params=20), [LabRegime.FP], 10, [0])
        assert summary.reports == []
