"""Counter-based random streams.

Every draw is a pure function of (seed, stream, step, index): Philox output
position ``index`` under key (seed, stream) and counter block ``step``. An
agent's noise therefore never depends on how many other agents exist, the
order they are processed in, or how many threads are running.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

STREAM_INIT = 1
STREAM_NOISE = 2

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


class CounterRNG:
    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def raw(self, stream: int, step: int, count: int) -> np.ndarray:
        key = np.array([self.seed, stream], dtype=np.uint64)
        ctr = np.array([0, 0, int(step), 0], dtype=np.uint64)
        bg = np.random.Philox(key=key, counter=ctr)
        return bg.random_raw(count)

    def uniform(self, stream: int, step: int, count: int) -> np.ndarray:
        """Uniforms on [0, 1) with 53-bit resolution."""
        return (self.raw(stream, step, count) >> np.uint64(11)).astype(float) * _TWO_M53

    def normal(self, stream: int, step: int, shape) -> np.ndarray:
        """Standard normals by inverse CDF; entry k uses Philox output k only."""
        count = int(np.prod(shape))
        u = ((self.raw(stream, step, count) >> np.uint64(11)).astype(float) + 0.5) * _TWO_M53
        return ndtri(u).reshape(shape)
