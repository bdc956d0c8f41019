"""Hierarchical deterministic seeding.

Every random decision in the library draws from a generator obtained through a
SeedStream. Streams are derived by (label, index) paths from a root seed, so
any unit of work (a repetition, a tree, a bag) owns an independent stream and
results cannot depend on execution order or thread schedule.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["SeedStream"]


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SeedStream:
    """Immutable handle on a deterministic random stream.

    ``child(label, index)`` derives an independent stream; the same root seed
    and derivation path always yield the same draws. ``rng()`` materializes a
    fresh numpy Generator positioned at the start of the stream.
    """

    entropy: tuple[int, ...]

    def __init__(self, root: int | tuple[int, ...] = 0):
        if isinstance(root, tuple):
            path = root
        else:
            root = int(root)
            if not 0 <= root < 2**64:
                raise ValueError(f"root seed must be a 64-bit unsigned int, got {root}")
            path = (root,)
        object.__setattr__(self, "entropy", path)

    def child(self, label: str, index: int = 0) -> "SeedStream":
        if index < 0:
            raise ValueError("index must be non-negative")
        return SeedStream(self.entropy + (_label_key(label), int(index)))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(list(self.entropy)))


def as_seed_stream(seed: "SeedStream | int | None", fallback: SeedStream) -> SeedStream:
    """Coerce an int or None into a SeedStream (None -> fallback)."""
    if seed is None:
        return fallback
    if isinstance(seed, SeedStream):
        return seed
    return SeedStream(int(seed))
