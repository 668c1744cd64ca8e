"""Deterministic random streams.

Every stochastic component draws from an :class:`RngStream` identified by a
(seed, stream_id) pair. Derived streams are produced by hashing the parent id
with a key, so concurrent evaluators can own independent streams whose output
does not depend on scheduling order or thread count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _mix(*parts: int) -> int:
    buf = b"".join((int(p) & _MASK64).to_bytes(8, "little") for p in parts)
    return fnv1a_64(buf)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator; identical (seed, stream_id) gives an
        identical sample sequence on every platform."""
        ss = np.random.SeedSequence(
            entropy=int(self.seed) & _MASK64, spawn_key=(int(self.stream_id) & _MASK64,)
        )
        return np.random.Generator(np.random.PCG64(ss))

    def derive(self, *key: int) -> "RngStream":
        """Child stream for a sub-task (e.g. iteration, candidate, sample)."""
        return RngStream(self.seed, _mix(self.stream_id, *key))
