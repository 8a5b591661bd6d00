"""Deterministic per-sample random substreams.

Every stochastic choice in the engine draws from a stream derived from
(seed, sample_id, purpose). The derivation is a pure function of those three
values, so adding or removing a sample never reshuffles the randomness
assigned to any other sample, and iteration order is irrelevant.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class Seed:
    """64-bit unsigned experiment seed."""

    value: int

    def __post_init__(self) -> None:
        if not (0 <= self.value <= _MAX_SEED):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.value}")


def _coerce(seed: "Seed | int") -> int:
    value = seed.value if isinstance(seed, Seed) else int(seed)
    if not (0 <= value <= _MAX_SEED):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {value}")
    return value


def _digest(seed: "Seed | int", sample_id: str, purpose: str) -> bytes:
    value = _coerce(seed)
    h = hashlib.blake2b(digest_size=32)
    h.update(value.to_bytes(8, "little"))
    h.update(b"\x00")
    h.update(purpose.encode("utf-8"))
    h.update(b"\x00")
    h.update(sample_id.encode("utf-8"))
    return h.digest()


def priority(seed: "Seed | int", sample_id: str, purpose: str) -> int:
    """Uniform 64-bit draw for one sample, used for without-replacement picks.

    Selecting the k samples with the smallest priorities is equivalent to a
    uniform sample of size k, and a sample's priority does not depend on which
    other samples exist.
    """
    return int.from_bytes(_digest(seed, sample_id, purpose)[:8], "little")


def substream(seed: "Seed | int", sample_id: str, purpose: str) -> np.random.Generator:
    """Independent numpy Generator keyed by (seed, sample_id, purpose)."""
    words = np.frombuffer(_digest(seed, sample_id, purpose), dtype=np.uint64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=words.tolist())))
