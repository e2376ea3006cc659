"""Deterministic seeded randomness for splits, folds, and selections.

All dataset protocols in this package must reproduce bit-for-bit from a seed,
across platforms and across reimplementations in other languages. Python's
``random`` module does not promise a stable shuffle algorithm between
versions, so we pin the generator explicitly:

* stream: splitmix64 (Steele et al., the generator used by Java's
  SplittableRandom seeding and many others), 64-bit state, 64-bit output;
* shuffle: Fisher-Yates from the last index down, drawing bounded integers
  by rejection sampling so the result is unbiased and portable.

Anything that needs "the seeded order of a dataset" goes through this module.
"""
from __future__ import annotations

from typing import Iterable, List, Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

T = TypeVar("T")


class SplitMix64:
    """splitmix64 stream over a 64-bit state.

    Seeds are taken modulo 2**64; negative seeds are permitted and wrap.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound). Rejection sampling, no modulo bias."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        # Largest multiple of bound that fits in 64 bits; draws at or above
        # it are rejected. Expected iterations < 2.
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % bound

    def unit(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def shuffled(items: Iterable[T], seed: int) -> List[T]:
    """Return a new list with a seeded Fisher-Yates shuffle applied.

    The input order is the canonical order: the same items in the same order
    with the same seed always produce the same permutation.
    """
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def derive_seed(seed: int, *labels: object) -> int:
    """Deterministically derive a sub-seed from a base seed and labels.

    Used to give independent streams to independent stages (per-fold, per
    frame) without correlated draws. FNV-1a over the label text keeps this
    reproducible from any language.
    """
    h = 0xCBF29CE484222325
    for label in labels:
        for byte in str(label).encode("utf-8"):
            h = ((h ^ byte) * 0x100000001B3) & _MASK64
        h = (h ^ 0x2E) * 0x100000001B3 & _MASK64  # separator between labels
    return (seed & _MASK64) ^ h


def sample_prefix(items: Sequence[T], count: int, seed: int) -> List[T]:
    """First ``count`` items of the seeded shuffle of ``items``.

    Prefixes nest: sample_prefix(x, a, s) is a prefix of
    sample_prefix(x, b, s) whenever a <= b.
    """
    if count < 0 or count > len(items):
        raise ValueError(f"count {count} outside [0, {len(items)}]")
    return shuffled(items, seed)[:count]
