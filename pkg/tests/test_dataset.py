import os

import numpy as np
import pandas as pd
import pytest

from lpqe.actions.dataset import (MISSING_TOKEN, EncodedDataset, FeatureVocabulary, build_vocab, discretize_numeric,
                                  expand_timestamp, load_prepared, preprocess, read_raw, split, synth_ctr)
from lpqe.errors import ConfigError, InvalidParameterError
from lpqe.train.model import auc


def write_csv(path, rows, header='label,a,b'):
    with open(path, 'w') as out_f:
        out_f.write(header + '\n')
        for row in rows:
            out_f.write(row + '\n')
    return path


class TestDiscretize:

    def test_examples(self):
        assert discretize_numeric(2) == 1
        assert discretize_numeric(100) == 21
        assert discretize_numeric(3) == 1
        assert discretize_numeric(0) == 1

    def test_missing(self):
        np.testing.assert_array_equal(discretize_numeric(np.array([-1.0, np.nan])), [MISSING_TOKEN] * 2)

    def test_base_two(self):
        assert discretize_numeric(10, log_base='2') == 11

    def test_unknown_base(self):
        with pytest.raises(InvalidParameterError):
            discretize_numeric(5, log_base='10')


class TestVocabulary:

    def frame(self):
        return pd.DataFrame({'f': ['x'] * 10 + ['y'] * 9 + ['z'], 'g': ['u'] * 20})

    def test_threshold_is_strict(self):
        vocab = build_vocab(self.frame(), ['f', 'g'], 10)
        assert 'x' in vocab.tokens[0]
        assert 'y' not in vocab.tokens[0]
        assert vocab.collapsed == [2, 0]
        assert vocab.collapsed_occurrences == [10, 0]

    def test_threshold_one_keeps_everything(self):
        vocab = build_vocab(self.frame(), ['f', 'g'], 1)
        assert vocab.collapsed == [0, 0]
        assert vocab.n == 4 + 2

    def test_ids_dense_with_one_oov_per_field(self):
        vocab = build_vocab(self.frame(), ['f', 'g'], 1)
        ids = sorted(vocab.oov_ids + [i for tokens in vocab.tokens for i in tokens.values()])
        assert ids == list(range(vocab.n))
        assert vocab.tokens[0] == {'x': 1, 'y': 2, 'z': 3}

    def test_encode_unknown_to_oov(self):
        vocab = build_vocab(self.frame(), ['f', 'g'], 10)
        ids = vocab.encode(pd.DataFrame({'f': ['x', 'y', 'new'], 'g': ['u', 'u', 'u']}))
        np.testing.assert_array_equal(ids[:, 0], [1, 0, 0])
        assert ids.max() < vocab.n

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            build_vocab(pd.DataFrame({'f': []}), ['f'], 1)

    def test_reload(self, tmp_path):
        vocab = build_vocab(self.frame(), ['f', 'g'], 10)
        path = str(tmp_path / 'vocab.json')
        vocab.dump(path)
        assert FeatureVocabulary.load(path) == vocab


class TestSplit:

    @pytest.mark.parametrize('n, sizes', [(10, (8, 1, 1)), (1000, (800, 100, 100)), (15, (12, 2, 1))])
    def test_sizes(self, n, sizes):
        parts = split(n, 3)
        assert parts.sizes() == sizes
        union = np.concatenate([parts.train, parts.validation, parts.test])
        assert sorted(union) == list(range(n))

    def test_seeded(self):
        np.testing.assert_array_equal(split(100, 5).train, split(100, 5).train)
        assert not np.array_equal(split(100, 5).train, split(100, 6).train)

    def test_too_small(self):
        with pytest.raises(InvalidParameterError):
            split(9, 0)


class TestEncodedDataset:

    def test_lpqd_layout(self):
        dataset = EncodedDataset(np.array([1, 0]), np.array([[3, 4], [5, 6]]))
        blob = dataset.to_bytes()
        assert blob[:4] == b'LPQD'
        assert len(blob) == 20 + 2 * (1 + 2 * 4)
        restored = EncodedDataset.from_bytes(blob)
        np.testing.assert_array_equal(restored.ids, dataset.ids)
        np.testing.assert_array_equal(restored.labels, dataset.labels)

    def test_rejects_truncated(self):
        blob = EncodedDataset(np.array([1]), np.array([[3]])).to_bytes()
        with pytest.raises(ConfigError):
            EncodedDataset.from_bytes(blob[:-1])


class TestReadRaw:

    def test_skips_malformed_rows(self, tmp_path):
        rows = ['1,x,y'] * 199 + ['2,x,y']
        raw = read_raw(write_csv(str(tmp_path / 'raw.csv'), rows))
        assert raw.malformed == 1
        assert len(raw.frame) == 199
        assert raw.fields == ['a', 'b']

    def test_aborts_above_one_percent(self, tmp_path):
        rows = ['1,x,y'] * 97 + ['1,x', 'maybe,x,y', '0,x,y,z']
        with pytest.raises(ConfigError):
            read_raw(write_csv(str(tmp_path / 'raw.csv'), rows))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_raw(str(tmp_path / 'nope.csv'))

    def test_numeric_fields(self, tmp_path):
        raw = read_raw(write_csv(str(tmp_path / 'raw.csv'), ['1,100,y', '0,,y']), numeric_fields=['a'])
        assert list(raw.frame['a']) == ['21', str(MISSING_TOKEN)]

    def test_avazu(self, tmp_path):
        path = write_csv(str(tmp_path / 'avazu.csv'), ['1,1,14102100,a', '0,2,14102523,b'], header='id,click,hour,site')
        raw = read_raw(path, kind='avazu')
        assert 'id' not in raw.frame.columns
        assert list(raw.frame['hour']) == ['0', '23']
        assert list(raw.frame['is_weekend']) == ['0', '1']

    def test_criteo(self, tmp_path):
        path = str(tmp_path / 'criteo.tsv')
        row = '\t'.join(['1'] + ['100'] * 13 + ['c'] * 26)
        with open(path, 'w') as out_f:
            out_f.write(row + '\n')
        raw = read_raw(path, kind='criteo')
        assert len(raw.fields) == 39
        assert raw.frame['I1'][0] == '21'


def test_expand_timestamp():
    frame = expand_timestamp(['14102100', '14102523'])
    assert list(frame['weekday']) == ['1', '5']


class TestSynth:

    def test_zero_signal(self):
        data = synth_ctr(3, 30, 2000, 0.0, 1)
        assert data.oracle_logloss == pytest.approx(np.log(2.0))
        assert abs(data.frame['label'].astype(int).mean() - 0.5) < 0.05

    def test_large_signal_oracle_auc(self):
        data = synth_ctr(3, 30, 2000, 50.0, 1)
        assert auc(data.logits, data.frame['label'].astype(int).to_numpy()) > 0.95

    def test_seeded_csv(self, tmp_path):
        first, second = str(tmp_path / 'a.csv'), str(tmp_path / 'b.csv')
        synth_ctr(3, 30, 100, 1.0, 4).frame.to_csv(first, index=False)
        synth_ctr(3, 30, 100, 1.0, 4).frame.to_csv(second, index=False)
        with open(first, 'rb') as a_f, open(second, 'rb') as b_f:
            assert a_f.read() == b_f.read()


class TestPreprocess:

    def test_writes_splits_and_vocab(self, tmp_path):
        raw = str(tmp_path / 'raw.csv')
        synth_ctr(3, 60, 1000, 1.0, 2).frame.to_csv(raw, index=False)
        prepared = preprocess(raw, str(tmp_path / 'out'), threshold=2, seed=2)
        for name in ('train.lpqd', 'validation.lpqd', 'test.lpqd', 'vocab.json'):
            assert os.path.isfile(str(tmp_path / 'out' / name))
        assert (len(prepared.train), len(prepared.validation), len(prepared.test)) == (800, 100, 100)
        loaded = load_prepared(str(tmp_path / 'out'))
        np.testing.assert_array_equal(loaded.train.ids, prepared.train.ids)
        assert loaded.vocab.n == prepared.vocab.n

    def test_byte_identical_rerun(self, tmp_path):
        raw = str(tmp_path / 'raw.csv')
        synth_ctr(3, 60, 500, 1.0, 2).frame.to_csv(raw, index=False)
        preprocess(raw, str(tmp_path / 'one'), threshold=2, seed=2)
        preprocess(raw, str(tmp_path / 'two'), threshold=2, seed=2)
        for name in ('train.lpqd', 'vocab.json'):
            with open(str(tmp_path / 'one' / name), 'rb') as a_f, open(str(tmp_path / 'two' / name), 'rb') as b_f:
                assert a_f.read() == b_f.read()

    def test_threshold_one_collapses_nothing(self, tmp_path):
        raw = str(tmp_path / 'raw.csv')
        synth_ctr(3, 60, 500, 1.0, 2).frame.to_csv(raw, index=False)
        prepared = preprocess(raw, str(tmp_path / 'out'), threshold=1, seed=2)
        assert sum(prepared.vocab.collapsed) == 0
