"""Counter-based random streams.

Every replicate owns a Philox generator keyed by (seed, stream, replicate), so a
replicate's draws do not depend on how many replicates run or in what order.
"""
from __future__ import annotations

import numpy as np

STREAMS = {"ctmc": 1, "perqueue": 2, "sde": 3}

_OPEN_SCALE = 2.0 ** -53


def make_generator(seed: int, replicate: int = 0, stream: str = "ctmc") -> np.random.Generator:
    if stream not in STREAMS:
        raise ValueError(f"unknown random stream {stream!r}")
    if seed < 0 or replicate < 0:
        raise ValueError(f"seed and replicate must be nonnegative, got {seed}, {replicate}")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[stream], replicate))
    return np.random.Generator(np.random.Philox(sequence))


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1), safe for log and inverse-CDF transforms."""
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) * _OPEN_SCALE


class UniformStream:
    """Scalar uniform draws served from blocks of a generator."""

    def __init__(self, rng: np.random.Generator, block: int = 1 << 16):
        self.rng = rng
        self.block = block
        self._buffer: list[float] = []
        self._pos = 0

    def next(self) -> float:
        """Next uniform in (0, 1)."""
        if self._pos == len(self._buffer):
            self._buffer = open_uniforms(self.rng, self.block).tolist()
            self._pos = 0
        value = self._buffer[self._pos]
        self._pos += 1
        return value
