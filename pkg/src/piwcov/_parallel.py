"""Deterministic per-replication seeding and threaded replication loops."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np


def stream_key(*parts: object) -> int:
    """Stable 63-bit integer for a tuple of labels (independent of PYTHONHASHSEED)."""
    text = "|".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little") >> 1


def replication_rng(seed: int, stream: Sequence[int], rep: int) -> np.random.Generator:
    """Generator for replication ``rep`` of stream ``stream`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(*[int(s) for s in stream], int(rep)))
    return np.random.default_rng(ss)


def run_replications(
    fn: Callable[[int], np.ndarray | float],
    reps: int,
    threads: int = 1,
    chunk: int = 64,
) -> np.ndarray:
    """Evaluate ``fn(rep)`` for ``rep in range(reps)`` and stack in index order.

    Work is split into fixed chunks, so the output does not depend on the
    number of threads.
    """
    first = np.asarray(fn(0), dtype=np.float64)
    out = np.empty((reps,) + first.shape, dtype=np.float64)
    out[0] = first

    def work(bounds: tuple[int, int]) -> None:
        for r in range(*bounds):
            out[r] = fn(r)

    blocks = [(s, min(s + chunk, reps)) for s in range(1, reps, chunk)]
    if threads <= 1 or len(blocks) <= 1:
        for b in blocks:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    return out
