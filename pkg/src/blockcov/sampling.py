"""Seeded random streams and Wishart / Gaussian / chi-square draws.

A :class:`RandomStream` is a value: ``(seed, path)`` names one
``numpy`` ``SeedSequence`` node, and :func:`split_stream` descends one level
of that tree.  Monte Carlo code gives chunk ``i`` of a run the stream
``split_stream(root, i)`` so that results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientDofError, NotPositiveDefiniteError

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    @property
    def stream_id(self) -> tuple[int, ...]:
        return self.path

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def split_stream(stream: RandomStream, index: int) -> RandomStream:
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return RandomStream(stream.seed, stream.path + (int(index),))


def _rng(source) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    if isinstance(source, RandomStream):
        return source.generator()
    raise TypeError("expected a RandomStream or numpy Generator")


def bartlett_factor(n: int, p: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Lower-triangular ``T`` with ``T T' ~ W_p(n, I)``.

    Diagonal ``T_ii = sqrt(chi2_{n-i+1})`` (1-based ``i``), strictly lower
    entries standard normal.
    """
    shape = () if size is None else (size,)
    t = np.zeros(shape + (p, p))
    dof = n - np.arange(p)
    t[..., np.arange(p), np.arange(p)] = np.sqrt(rng.chisquare(dof, size=shape + (p,)))
    rows, cols = np.tril_indices(p, -1)
    t[..., rows, cols] = rng.standard_normal(shape + (rows.size,))
    return t


def sample_wishart(n: int, sigma, stream, size: int | None = None) -> np.ndarray:
    """Draw ``S ~ W_p(n, sigma)`` by the Bartlett decomposition.

    ``S = C T T' C'`` with ``C`` the Cholesky factor of ``sigma``.  With
    ``size`` given, returns a stack of independent draws.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatchError("sigma must be square")
    p = sigma.shape[0]
    if n < p:
        raise InsufficientDofError(f"degrees of freedom n={n} below dimension p={p}")
    try:
        c = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("sigma is not positive definite") from exc
    ct = c @ bartlett_factor(n, p, _rng(stream), size)
    s = ct @ np.swapaxes(ct, -1, -2)
    return 0.5 * (s + np.swapaxes(s, -1, -2))


def sample_gaussian_matrix(rows: int, cols: int, stream, size: int | None = None) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    shape = (rows, cols) if size is None else (size, rows, cols)
    return _rng(stream).standard_normal(shape)


def sample_chi2(k: float, stream, size: int | None = None):
    if k < 1:
        raise ValueError("chi-square degrees of freedom must be at least 1")
    return _rng(stream).chisquare(k, size=size)
