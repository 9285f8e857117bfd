import numpy as np
import pytest

from lpqe.errors import FeatureIndexError, InvalidParameterError, StaleTapeError, UndefinedMetricError
from lpqe.quant.rng import RngStream
from lpqe.train.model import CtrModel, ModelConfig, auc, evaluate, logloss, mean_logloss
from lpqe.utils.states import HeadKind


def make_case(head, seed, n_rows=6, n_fields=3, dim=4, batch=5):
    gen = np.random.default_rng(seed)
    model = CtrModel(ModelConfig(head, n_fields, dim, bias=0.1), RngStream(seed))
    gathered = gen.normal(0.0, 0.5, (n_rows, dim))
    local_ids = gen.integers(0, n_rows, (batch, n_fields))
    labels = gen.integers(0, 2, batch)
    return model, gathered, local_ids, labels


def loss_at(model, gathered, local_ids, labels):
    logits, _ = model.forward(gathered, local_ids)
    return mean_logloss(logits, labels)[0]


class TestLogloss:

    def test_values(self):
        assert logloss(0.0, 1)[0] == pytest.approx(np.log(2.0))
        assert logloss(0.0, 0)[1] == pytest.approx(0.5)

    def test_stable_for_large_logits(self):
        loss, grad = logloss(np.array([800.0, -800.0]), np.array([1, 0]))
        np.testing.assert_allclose(loss, [0.0, 0.0], atol=1e-300)
        loss, _ = logloss(np.array([800.0]), np.array([0]))
        assert loss[0] == pytest.approx(800.0)
        assert np.all(np.isfinite(grad))

    def test_rejects_labels(self):
        with pytest.raises(InvalidParameterError):
            logloss(0.0, 2)


class TestAuc:

    def test_perfect_and_inverted(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_ties_count_half(self):
        assert auc([0.5, 0.5], [0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])

    def test_evaluate(self):
        loss, value = evaluate(np.array([-1.0, 1.0]), np.array([0, 1]))
        assert value == 1.0
        assert loss == pytest.approx(np.log1p(np.exp(-1.0)))


class TestCtrModel:

    @pytest.mark.parametrize('head', [HeadKind.FM, HeadKind.LINEAR_SUM])
    def test_row_gradients_match_finite_differences(self, head):
        h = 1e-6
        for seed in range(100):
            model, gathered, local_ids, labels = make_case(head, seed)
            logits, tape = model.forward(gathered, local_ids)
            _, dlogit = mean_logloss(logits, labels)
            row_grads, _ = model.backward(tape, dlogit)
            i, k = seed % gathered.shape[0], seed % gathered.shape[1]
            plus, minus = gathered.copy(), gathered.copy()
            plus[i, k] += h
            minus[i, k] -= h
            numeric = (loss_at(model, plus, local_ids, labels) - loss_at(model, minus, local_ids, labels)) / (2 * h)
            assert row_grads[i, k] == pytest.approx(numeric, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize('head', [HeadKind.FM, HeadKind.LINEAR_SUM])
    def test_dense_gradients_match_finite_differences(self, head):
        h = 1e-6
        model, gathered, local_ids, labels = make_case(head, 3)
        logits, tape = model.forward(gathered, local_ids)
        _, dense = model.backward(tape, mean_logloss(logits, labels)[1])
        for key, grad in dense.items():
            for index in range(grad.size):
                base = model.params[key].copy()
                model.params[key] = base.copy()
                model.params[key][index] += h
                plus = loss_at(model, gathered, local_ids, labels)
                model.params[key] = base.copy()
                model.params[key][index] -= h
                minus = loss_at(model, gathered, local_ids, labels)
                model.params[key] = base
                assert grad[index] == pytest.approx((plus - minus) / (2 * h), rel=1e-6, abs=1e-9)

    def test_unused_rows_get_zero_gradient(self):
        model = CtrModel(ModelConfig(HeadKind.FM, 2, 3))
        gathered = np.ones((4, 3))
        logits, tape = model.forward(gathered, np.array([[0, 1]]))
        row_grads, _ = model.backward(tape, np.ones_like(logits))
        np.testing.assert_array_equal(row_grads[2:], 0.0)

    def test_fm_logit(self):
        model = CtrModel(ModelConfig(HeadKind.FM, 2, 2, bias=0.5))
        logits, tape = model.forward(np.array([[1.0, 2.0], [3.0, -1.0]]), np.array([[0, 1]]))
        assert logits[0] == pytest.approx(0.5 + 1.0 * 3.0 + 2.0 * -1.0)
        np.testing.assert_allclose(tape.replay(), logits)

    def test_stale_tape(self):
        model = CtrModel(ModelConfig(HeadKind.FM, 1, 2))
        logits, tape = model.forward(np.ones((1, 2)), np.array([[0]]))
        model.touch()
        with pytest.raises(StaleTapeError):
            model.backward(tape, np.ones_like(logits))

    def test_field_count_and_row_range(self):
        model = CtrModel(ModelConfig(HeadKind.FM, 2, 2))
        with pytest.raises(InvalidParameterError):
            model.forward(np.ones((3, 2)), np.array([[0, 1, 2]]))
        with pytest.raises(FeatureIndexError):
            model.forward(np.ones((3, 2)), np.array([[0, 3]]))
