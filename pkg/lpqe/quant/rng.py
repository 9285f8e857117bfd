"""
Counter-based random streams for reproducible stochastic rounding
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

# Stream purposes, used as the first element of a child key
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_REQUANTIZE = 3
STREAM_MODEL = 4
STREAM_SPLIT = 5
STREAM_SYNTH = 6
STREAM_LAB = 7


@dataclass(frozen=True)
class RngStream:
    """Immutable random stream keyed by (seed, key path, counter)

    Every draw is a pure function of the stream value: the same stream always
    yields the same numbers, and `advance()` returns the stream for the next
    draw. Draws come from numpy's counter-based Philox generator.
    """
    seed: int
    key: Tuple[int, ...] = field(default=())
    counter: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer, got {!r}".format(self.seed))

    def child(self, *key: int) -> 'RngStream':
        """Derive an independent stream for a purpose/index path"""
        return RngStream(self.seed, self.key + tuple(int(k) for k in key), 0)

    def advance(self, steps: int = 1) -> 'RngStream':
        """Return the stream positioned `steps` draws later"""
        return RngStream(self.seed, self.key, self.counter + steps)

    def at(self, counter: int) -> 'RngStream':
        """Return the stream positioned at an absolute counter (e.g. iteration index)"""
        return RngStream(self.seed, self.key, int(counter))

    def generator(self) -> np.random.Generator:
        """Numpy generator for the current counter state"""
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.key + (self.counter,))
        return np.random.Generator(np.random.Philox(seq))

    def uniform(self, shape=None) -> np.ndarray:
        """Uniform draws in [0, 1)"""
        return self.generator().random(shape)
