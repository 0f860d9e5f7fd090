"""Splittable random streams.

Every batch of paths ("chunk") owns three independent Philox streams, one
each for the Brownian increments, the Poisson jump driver and the switching
clocks.  Streams are keyed by ``(master_seed, chunk, stream_id)`` through
``numpy.random.SeedSequence`` so results only depend on the partition of the
ensemble into chunks, never on thread scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BROWNIAN = 0
JUMPS = 1
CLOCKS = 2
COUPLING = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Streams:
    """The three per-chunk generators plus the lineage that produced them."""

    w: np.random.Generator
    n: np.random.Generator
    xi: np.random.Generator
    lineage: dict = field(default_factory=dict)

    @classmethod
    def from_seed(cls, seed: int, chunk: int = 0, *prefix: int) -> "Streams":
        key = tuple(prefix) + (chunk,)
        return cls(
            w=substream(seed, *key, BROWNIAN),
            n=substream(seed, *key, JUMPS),
            xi=substream(seed, *key, CLOCKS),
            lineage={"seed": int(seed), "prefix": list(prefix), "chunk": int(chunk),
                     "streams": {"brownian": BROWNIAN, "jumps": JUMPS, "clocks": CLOCKS},
                     "bit_generator": "Philox"},
        )


def as_streams(rng, seed: int = 0) -> Streams:
    """Accept a ``Streams``, an integer seed, or ``None`` (use ``seed``)."""
    if isinstance(rng, Streams):
        return rng
    if rng is None:
        return Streams.from_seed(seed)
    if isinstance(rng, (int, np.integer)):
        return Streams.from_seed(int(rng))
    if isinstance(rng, np.random.Generator):
        # a single generator is split deterministically into three children
        seeds = rng.integers(0, 2**63 - 1, size=3)
        return Streams(*(np.random.Generator(np.random.Philox(int(s))) for s in seeds),
                       lineage={"parent": "Generator", "child_seeds": [int(s) for s in seeds]})
    raise TypeError(f"cannot build random streams from {type(rng).__name__}")


def chunk_sizes(n_paths: int, chunk_size: int) -> list[int]:
    full, rem = divmod(int(n_paths), int(chunk_size))
    return [chunk_size] * full + ([rem] if rem else [])
