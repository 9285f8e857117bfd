"""
Dataset ingestion, preprocessing and the synthetic CTR generator
"""
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from lpqe.errors import ConfigError, InvalidParameterError
from lpqe.quant.rng import STREAM_SPLIT, STREAM_SYNTH, RngStream
from lpqe.utils.common import dump_to_file, ensure_dir, log_info, log_warn

MISSING_TOKEN = -1
LOG_BASES = {'e': np.e, '2': 2.0}
MALFORMED_LIMIT = 0.01
SPLIT_RATIO = (0.8, 0.1, 0.1)

CRITEO_NUMERIC = ['I{}'.format(i) for i in range(1, 14)]
CRITEO_CATEGORICAL = ['C{}'.format(i) for i in range(1, 27)]
DEFAULT_THRESHOLDS = {'criteo': 10, 'avazu': 2, 'csv': 1, 'synth': 1}

DATASET_MAGIC = b'LPQD'
DATASET_VERSION = 1
DATASET_HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('n_samples', '<u8'),
    ('n_fields', '<u4'),
])


def discretize_numeric(x, log_base='e'):
    """Token floor(log(x)^2) for x > 2, 1 for 0 <= x <= 2, MISSING_TOKEN for negative or NaN"""
    if log_base not in LOG_BASES:
        raise InvalidParameterError("log base must be one of {0}, got {1!r}".format(sorted(LOG_BASES), log_base))
    arr = np.asarray(x, dtype=np.float64)
    with np.errstate(invalid='ignore', divide='ignore'):
        logs = np.log(np.where(arr > 2, arr, 1.0)) / np.log(LOG_BASES[log_base])
        tokens = np.where(arr > 2, np.floor(logs * logs), 1.0)
    tokens = np.where(np.isnan(arr) | (arr < 0), MISSING_TOKEN, tokens).astype(np.int64)
    if tokens.ndim == 0:
        return int(tokens)
    return tokens


def expand_timestamp(values) -> pd.DataFrame:
    """Split YYMMDDHH timestamps into hour, weekday and weekend flag"""
    stamps = pd.to_datetime(pd.Series(values).astype(str), format='%y%m%d%H')
    weekday = stamps.dt.weekday
    return pd.DataFrame({
        'hour': stamps.dt.hour.astype(str),
        'weekday': weekday.astype(str),
        'is_weekend': (weekday >= 5).astype(int).astype(str),
    })


@dataclass
class FeatureVocabulary:
    """Per-field token to feature id maps over one shared id space

    Each field owns a contiguous id block starting with its OOV id, followed by
    the kept tokens in first-occurrence order.
    """
    fields: List[str]
    threshold: int
    tokens: List[Dict[str, int]]
    oov_ids: List[int]
    collapsed: List[int] = field(default_factory=list)
    collapsed_occurrences: List[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return sum(len(tokens) + 1 for tokens in self.tokens)

    @property
    def n_fields(self) -> int:
        return len(self.fields)

    def encode(self, frame: pd.DataFrame) -> np.ndarray:
        """(samples x fields) feature ids of a token frame, unknown tokens map to OOV"""
        columns = []
        for index, name in enumerate(self.fields):
            column = frame[name].astype(str).map(self.tokens[index])
            columns.append(column.fillna(self.oov_ids[index]).to_numpy(dtype=np.int64))
        if not columns:
            return np.zeros((len(frame), 0), dtype=np.int64)
        return np.stack(columns, axis=1)

    def to_dict(self):
        return {
            'threshold': self.threshold,
            'n': self.n,
            'fields': [{'name': name, 'oov_id': self.oov_ids[i], 'size': len(self.tokens[i]) + 1,
                        'collapsed': self.collapsed[i] if self.collapsed else 0,
                        'collapsed_occurrences': self.collapsed_occurrences[i] if self.collapsed_occurrences else 0,
                        'tokens': self.tokens[i]}
                       for i, name in enumerate(self.fields)],
        }

    @classmethod
    def from_dict(cls, data) -> 'FeatureVocabulary':
        try:
            fields = data['fields']
            return cls(fields=[item['name'] for item in fields], threshold=int(data['threshold']),
                       tokens=[{str(k): int(v) for k, v in item['tokens'].items()} for item in fields],
                       oov_ids=[int(item['oov_id']) for item in fields],
                       collapsed=[int(item.get('collapsed', 0)) for item in fields],
                       collapsed_occurrences=[int(item.get('collapsed_occurrences', 0)) for item in fields])
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError("malformed vocabulary: {!s}".format(err))

    def dump(self, path) -> bool:
        return dump_to_file(path, json.dumps(self.to_dict(), sort_keys=True, indent=1) + '\n')

    @classmethod
    def load(cls, path) -> 'FeatureVocabulary':
        try:
            with open(path, 'r') as in_f:
                return cls.from_dict(json.load(in_f))
        except (IOError, ValueError) as err:
            raise ConfigError("{0} - cannot read vocabulary: {1!s}".format(path, err))


def build_vocab(frame: pd.DataFrame, fields: Sequence[str], threshold: int) -> FeatureVocabulary:
    """Count tokens over the whole dataset and collapse those seen fewer than `threshold` times"""
    if threshold < 1:
        raise InvalidParameterError("threshold must be at least 1, got {!r}".format(threshold))
    if len(frame) == 0 or not fields:
        raise InvalidParameterError("cannot build a vocabulary from an empty dataset")
    tokens, oov_ids, collapsed, collapsed_occurrences = [], [], [], []
    offset = 0
    for name in fields:
        column = frame[name].astype(str)
        counts = column.value_counts(sort=False)
        kept = [token for token in pd.unique(column) if counts.at[token] >= threshold]
        dropped = counts[counts < threshold]
        oov_ids.append(offset)
        tokens.append({token: offset + 1 + i for i, token in enumerate(kept)})
        collapsed.append(int(dropped.size))
        collapsed_occurrences.append(int(dropped.sum()))
        offset += len(kept) + 1
    return FeatureVocabulary(list(fields), threshold, tokens, oov_ids, collapsed, collapsed_occurrences)


@dataclass
class DatasetSplit:
    """Disjoint train, validation and test sample indices"""
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self):
        return int(self.train.size), int(self.validation.size), int(self.test.size)


def split(n_samples: int, seed: int) -> DatasetSplit:
    """Seeded 8:1:1 shuffle split, each share rounded half up"""
    if n_samples < 10:
        raise InvalidParameterError("need at least 10 samples to split, got {}".format(n_samples))
    order = RngStream(seed).child(STREAM_SPLIT).generator().permutation(n_samples)
    n_train = int(np.floor(SPLIT_RATIO[0] * n_samples + 0.5))
    n_val = int(np.floor(SPLIT_RATIO[1] * n_samples + 0.5))
    return DatasetSplit(order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:], seed)


@dataclass
class EncodedDataset:
    """Binary labels and per-field feature ids"""
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 2 or self.ids.shape[0] != self.labels.shape[0]:
            raise InvalidParameterError("ids must be a (samples x fields) matrix matching the labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_fields(self) -> int:
        return int(self.ids.shape[1])

    def subset(self, index) -> 'EncodedDataset':
        return EncodedDataset(self.labels[index], self.ids[index])

    def to_bytes(self) -> bytes:
        """Serialise to the LPQD format"""
        header = np.zeros(1, dtype=DATASET_HEADER)
        header['magic'] = DATASET_MAGIC
        header['version'] = DATASET_VERSION
        header['n_samples'] = len(self)
        header['n_fields'] = self.n_fields
        records = np.zeros(len(self), dtype=np.dtype([('label', 'u1'), ('ids', '<u4', (self.n_fields,))]))
        records['label'] = self.labels
        records['ids'] = self.ids
        return header.tobytes() + records.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> 'EncodedDataset':
        if len(blob) < DATASET_HEADER.itemsize:
            raise ConfigError("encoded dataset truncated: no header")
        header = np.frombuffer(blob, dtype=DATASET_HEADER, count=1)[0]
        if bytes(header['magic']) != DATASET_MAGIC:
            raise ConfigError("not an LPQD dataset (magic {!r})".format(bytes(header['magic'])))
        if int(header['version']) != DATASET_VERSION:
            raise ConfigError("unsupported dataset version {}".format(int(header['version'])))
        n_samples, n_fields = int(header['n_samples']), int(header['n_fields'])
        record = np.dtype([('label', 'u1'), ('ids', '<u4', (n_fields,))])
        if len(blob) != DATASET_HEADER.itemsize + n_samples * record.itemsize:
            raise ConfigError("encoded dataset size does not match its header")
        records = np.frombuffer(blob, dtype=record, count=n_samples, offset=DATASET_HEADER.itemsize)
        return cls(records['label'].copy(), records['ids'].reshape(n_samples, n_fields).astype(np.int64))

    def dump(self, path) -> bool:
        with open(path, 'wb') as out_f:
            out_f.write(self.to_bytes())
        return True

    @classmethod
    def load(cls, path) -> 'EncodedDataset':
        try:
            with open(path, 'rb') as in_f:
                return cls.from_bytes(in_f.read())
        except IOError as err:
            raise ConfigError("{0} - I/O error({1}): {2}".format(path, err.errno, err.strerror))


@dataclass
class RawTable:
    """Tokenised input rows"""
    frame: pd.DataFrame
    fields: List[str]
    malformed: int
    total: int


def _tokenise_numeric(frame: pd.DataFrame, numeric_fields: Sequence[str], log_base: str):
    for name in numeric_fields:
        values = pd.to_numeric(frame[name].replace('', np.nan), errors='coerce')
        frame[name] = discretize_numeric(values.to_numpy(), log_base).astype(str)


def read_raw(path, kind: str = 'csv', numeric_fields: Optional[Sequence[str]] = None,
             log_base: str = 'e') -> RawTable:
    """Read a raw CTR file into string tokens, skipping and counting malformed rows

    More than one percent malformed rows aborts with ConfigError.
    """
    bad_lines = []

    def on_bad_line(line):
        bad_lines.append(line)

    options = dict(dtype=str, keep_default_na=False, engine='python', on_bad_lines=on_bad_line)
    try:
        if kind == 'criteo':
            frame = pd.read_csv(path, sep='\t', header=None, names=['label'] + CRITEO_NUMERIC + CRITEO_CATEGORICAL,
                                **options)
            label, numeric_fields = 'label', CRITEO_NUMERIC
        elif kind == 'avazu':
            frame = pd.read_csv(path, **options)
            label, numeric_fields = 'click', []
        elif kind in ('csv', 'synth'):
            frame = pd.read_csv(path, **options)
            label, numeric_fields = 'label', list(numeric_fields or [])
        else:
            raise ConfigError("unknown dataset kind {!r}".format(kind))
    except (IOError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise ConfigError("{0} - cannot read input: {1!s}".format(path, err))
    if label not in frame.columns:
        raise ConfigError("{0} - no {1!r} label column".format(path, label))

    # short rows are padded with NaN, genuine empty cells read as ''
    good = frame[label].isin(['0', '1']) & ~frame.isna().any(axis=1)
    malformed = len(bad_lines) + int((~good).sum())
    total = len(frame) + len(bad_lines)
    if total == 0:
        raise ConfigError("{0} - input has no rows".format(path))
    if malformed > MALFORMED_LIMIT * total:
        raise ConfigError("{0} - {1} of {2} rows are malformed".format(path, malformed, total))
    if malformed:
        log_warn("Skipped {0} malformed row(s) of {1}".format(malformed, total))
    frame = frame[good].reset_index(drop=True)
    frame = frame.rename(columns={label: 'label'})

    if kind == 'avazu':
        frame = frame.drop(columns=['id'], errors='ignore')
        if 'hour' in frame.columns:
            expanded = expand_timestamp(frame['hour'])
            frame = pd.concat([frame.drop(columns=['hour']), expanded], axis=1)
    missing = [name for name in numeric_fields if name not in frame.columns]
    if missing:
        raise ConfigError("{0} - numeric field(s) not found: {1}".format(path, ', '.join(missing)))
    _tokenise_numeric(frame, numeric_fields, log_base)
    fields = [name for name in frame.columns if name != 'label']
    return RawTable(frame, fields, malformed, total)


@dataclass
class SynthDataset:
    """Generated CTR samples with the generator's own logits"""
    frame: pd.DataFrame
    logits: np.ndarray
    oracle_logloss: float
    params: Dict[str, float]


def _zipf_probabilities(size: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1, dtype=np.float64) ** exponent
    return weights / weights.sum()


def synth_ctr(n_fields: int, vocab_size: int, n_samples: int, signal_strength: float, seed: int,
              dim: int = 4, zipf_exponent: float = 1.1) -> SynthDataset:
    """Labels drawn from the sigmoid of a ground-truth first-order plus FM logit

    Tokens follow a Zipf-like popularity per field. signal_strength scales the
    ground-truth logit; zero gives fair coin labels.
    """
    if n_fields < 1 or n_samples < 1 or vocab_size < n_fields or dim < 1:
        raise InvalidParameterError("synthetic data needs positive sizes and at least one token per field")
    if signal_strength < 0:
        raise InvalidParameterError("signal strength must not be negative")
    stream = RngStream(seed).child(STREAM_SYNTH)
    sizes = [vocab_size // n_fields + (1 if f < vocab_size % n_fields else 0) for f in range(n_fields)]
    gen = stream.child(0).generator()
    linear = [gen.normal(0.0, 0.5, size) for size in sizes]
    latent = [gen.normal(0.0, 1.0 / np.sqrt(dim), (size, dim)) for size in sizes]

    draws = stream.child(1).generator()
    columns, first_order = {}, np.zeros(n_samples)
    pooled, squares = np.zeros((n_samples, dim)), np.zeros(n_samples)
    for f, size in enumerate(sizes):
        index = draws.choice(size, size=n_samples, p=_zipf_probabilities(size, zipf_exponent))
        columns['f{}'.format(f)] = ['t{0}_{1}'.format(f, k) for k in index]
        first_order += linear[f][index]
        pooled += latent[f][index]
        squares += np.einsum('bk,bk->b', latent[f][index], latent[f][index])
    logits = signal_strength * (first_order + 0.5 * (np.einsum('bk,bk->b', pooled, pooled) - squares))
    probs = expit(logits)
    labels = (stream.child(2).uniform(n_samples) < probs).astype(np.int64)
    with np.errstate(divide='ignore', invalid='ignore'):
        entropy = -(np.where(probs > 0, probs * np.log(probs), 0.0)
                    + np.where(probs < 1, (1.0 - probs) * np.log1p(-probs), 0.0))
    frame = pd.DataFrame({'label': labels.astype(str), **columns})
    params = {'n_fields': n_fields, 'vocab_size': vocab_size, 'n_samples': n_samples,
              'signal_strength': signal_strength, 'seed': seed, 'dim': dim, 'zipf_exponent': zipf_exponent}
    return SynthDataset(frame, logits, float(entropy.mean()), params)


@dataclass
class PreparedData:
    """Encoded splits plus the vocabulary they index"""
    vocab: FeatureVocabulary
    train: EncodedDataset
    validation: EncodedDataset
    test: EncodedDataset
    malformed: int = 0


def encode_splits(raw: RawTable, threshold: int, seed: int) -> PreparedData:
    """Vocabulary over all rows, then the seeded 8:1:1 split"""
    vocab = build_vocab(raw.frame, raw.fields, threshold)
    encoded = EncodedDataset(raw.frame['label'].astype(int).to_numpy(), vocab.encode(raw.frame))
    parts = split(len(encoded), seed)
    return PreparedData(vocab, encoded.subset(parts.train), encoded.subset(parts.validation),
                        encoded.subset(parts.test), raw.malformed)


def preprocess(path, out_dir, kind: str = 'csv', threshold: Optional[int] = None, seed: int = 2022,
               numeric_fields: Optional[Sequence[str]] = None, log_base: str = 'e') -> PreparedData:
    """Encode a raw file into train/val/test LPQD files and a vocabulary manifest"""
    if threshold is None:
        threshold = DEFAULT_THRESHOLDS.get(kind, 1)
    raw = read_raw(path, kind, numeric_fields, log_base)
    log_info("Read {0} row(s) with {1} field(s) from {2}".format(len(raw.frame), len(raw.fields), path))
    prepared = encode_splits(raw, threshold, seed)
    ensure_dir(out_dir)
    for name in ('train', 'validation', 'test'):
        getattr(prepared, name).dump(os.path.join(out_dir, name + '.lpqd'))
    prepared.vocab.dump(os.path.join(out_dir, 'vocab.json'))
    log_info("Vocabulary of {0} feature(s), {1} token(s) collapsed to OOV".format(
        prepared.vocab.n, sum(prepared.vocab.collapsed)))
    return prepared


def load_prepared(data_dir) -> PreparedData:
    """Read what preprocess wrote"""
    vocab = FeatureVocabulary.load(os.path.join(data_dir, 'vocab.json'))
    parts = [EncodedDataset.load(os.path.join(data_dir, name + '.lpqd'))
             for name in ('train', 'validation', 'test')]
    for part in parts:
        if part.n_fields != vocab.n_fields or (len(part) and part.ids.max() >= vocab.n):
            raise ConfigError("{} - encoded data does not match its vocabulary".format(data_dir))
    return PreparedData(vocab, *parts)


def synth_prepared(n_fields: int, vocab_size: int, n_samples: int, signal_strength: float, seed: int,
                   threshold: int = 1) -> PreparedData:
    """Generate synthetic samples and encode them without touching the disk"""
    data = synth_ctr(n_fields, vocab_size, n_samples, signal_strength, seed)
    frame = data.frame
    raw = RawTable(frame, [name for name in frame.columns if name != 'label'], 0, len(frame))
    return encode_splits(raw, threshold, seed)
