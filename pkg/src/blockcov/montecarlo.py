"""Chunked, reproducible Monte Carlo driver.

Replicates are cut into fixed-size chunks; chunk ``i`` draws from
``split_stream(root, i)`` and returns per-replicate statistics.  Chunk
summaries are merged in chunk order, so the result is bit-identical for any
number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sampling import RandomStream, split_stream

DEFAULT_CHUNK = 20_000


@dataclass
class Summary:
    """Count, mean vector and centred cross-product matrix of a sample."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "Summary":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        mean = x.mean(axis=0)
        d = x - mean
        return cls(x.shape[0], mean, d.T @ d)

    def merge(self, other: "Summary") -> "Summary":
        # Chan et al. pairwise update
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / n)
        return Summary(n, mean, m2)

    @property
    def cov(self) -> np.ndarray:
        return self.m2 / max(self.count - 1, 1)

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / self.count)

    def corr(self) -> np.ndarray:
        sd = np.sqrt(np.diag(self.m2))
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.m2 / np.outer(sd, sd)


def default_threads() -> int:
    return os.cpu_count() or 1


def chunk_counts(reps: int, chunk_size: int = DEFAULT_CHUNK) -> list[int]:
    if reps < 1:
        raise ValueError("reps must be at least 1")
    full, rest = divmod(reps, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run(statistic, reps: int, stream: RandomStream, *, threads: int | None = None,
        chunk_size: int = DEFAULT_CHUNK) -> Summary:
    """Evaluate ``statistic(rng, count) -> (count, k) array`` over ``reps`` replicates."""
    counts = chunk_counts(reps, chunk_size)

    def one(i: int) -> Summary:
        rng = split_stream(stream, i).generator()
        return Summary.of(statistic(rng, counts[i]))

    threads = threads or default_threads()
    if threads == 1 or len(counts) == 1:
        parts = [one(i) for i in range(len(counts))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(counts))))
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    return total
