"""First and second moments of ordered eigenvalues of ``W_q(dof, I)``.

Block sizes 1, 2 and 3 have exact rational moments when the half-exponent
``(dof - q - 1) / 2`` of the eigenvalue density is an integer: the density
is rewritten in the eigenvalue gaps, expanded binomially and integrated term
by term against exponentials.  Everything else falls back to Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from . import montecarlo
from .errors import InsufficientDofError, ParityUnsupportedError
from .sampling import RandomStream, bartlett_factor, split_stream

EXACT = "exact"
MC = "mc"
DEFAULT_MC_REPS = 1_000_000
DEFAULT_STREAM = RandomStream(0)


def _gap_exponent(dof: int, q: int) -> int:
    twice_u = dof - q - 1
    if dof < q + 1 or twice_u % 2:
        raise ParityUnsupportedError(
            f"exact {q}x{q} moments need dof >= {q + 1} with dof - {q + 1} even, got dof={dof}"
        )
    return twice_u // 2


@lru_cache(maxsize=None)
def _f3_numerator(x1: int, x2: int, x3: int, u: int) -> int:
    # Each term is scaled by 3**(3u + x3 + 1) so that the sum is an integer.
    total = 0
    for i in range(u + 1):
        ci = comb(u, i)
        for j in (0, 1):
            for s in range(u + 1):
                cs = ci * comb(u, s) * factorial(j + s + x1 + 1)
                for t in range(u - s + 1):
                    e2 = 3 * u - i + j - t + x1 + x3 + 3
                    total += (
                        cs
                        * comb(u - s, t)
                        * (1 << e2)
                        * 3 ** (i + s + t)
                        * factorial(i - j + t + 2 + x2)
                        * factorial(3 * u - i - s - t + x3)
                    )
    return total


def f3_exact(x, dof: int) -> Fraction:
    """``E[D1^x1 D2^x2 D3^x3]`` for the gaps ``D1 = l1 - l2, D2 = l2 - l3, D3 = l3``
    of the ordered eigenvalues of ``W_3(dof, I_3)``.

    The normalising constant cancels in the ratio with the zero-exponent sum.
    """
    x1, x2, x3 = (int(v) for v in x)
    if min(x1, x2, x3) < 0:
        raise ValueError("exponents must be nonnegative")
    u = _gap_exponent(dof, 3)
    return Fraction(_f3_numerator(x1, x2, x3, u), _f3_numerator(0, 0, 0, u) * 3**x3)


@lru_cache(maxsize=None)
def _f2_numerator(x1: int, x2: int, u: int) -> int:
    return sum(
        comb(u, s) * factorial(s + 1 + x1) * (1 << (s + 2 + x1)) * factorial(2 * u - s + x2)
        for s in range(u + 1)
    )


def f2_exact(x, dof: int) -> Fraction:
    """``E[D1^x1 D2^x2]`` with ``D1 = l1 - l2, D2 = l2`` for ``W_2(dof, I_2)``.

    The ordered-eigenvalue density is proportional to
    ``(l1 l2)^u (l1 - l2) exp(-(l1 + l2) / 2)`` with ``u = (dof - 3) / 2``.
    """
    x1, x2 = (int(v) for v in x)
    if min(x1, x2) < 0:
        raise ValueError("exponents must be nonnegative")
    u = _gap_exponent(dof, 2)
    return Fraction(_f2_numerator(x1, x2, u), _f2_numerator(0, 0, u))


def exact_available(block_size: int, dof: int) -> bool:
    if block_size == 1:
        return dof >= 1
    if block_size in (2, 3):
        return dof >= block_size + 1 and (dof - block_size - 1) % 2 == 0
    return False


@lru_cache(maxsize=None)
def exact_ordered_moments(block_size: int, dof: int) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Exact ``(E[d_i], E[d_i^2])`` for ordered eigenvalues, as fractions."""
    if block_size == 1:
        return (Fraction(dof),), (Fraction(dof * (dof + 2)),)
    if block_size == 2:
        def f(a, b):
            return f2_exact((a, b), dof)
        e1 = (f(1, 0) + f(0, 1), f(0, 1))
        e2 = (f(2, 0) + 2 * f(1, 1) + f(0, 2), f(0, 2))
        return e1, e2
    if block_size == 3:
        def f(a, b, c):
            return f3_exact((a, b, c), dof)
        e1 = (
            f(1, 0, 0) + f(0, 1, 0) + f(0, 0, 1),
            f(0, 1, 0) + f(0, 0, 1),
            f(0, 0, 1),
        )
        e2 = (
            f(2, 0, 0) + f(0, 2, 0) + f(0, 0, 2) + 2 * (f(1, 1, 0) + f(1, 0, 1) + f(0, 1, 1)),
            f(0, 2, 0) + f(0, 0, 2) + 2 * f(0, 1, 1),
            f(0, 0, 2),
        )
        return e1, e2
    raise ParityUnsupportedError(f"no exact expansion for block size {block_size}")


@dataclass(frozen=True)
class OrderedMoments:
    e1: np.ndarray
    e2: np.ndarray
    methods: tuple[str, ...]
    stderr1: np.ndarray
    stderr2: np.ndarray


def mc_ordered_moments(block_size: int, dof: int, stream: RandomStream, reps: int = DEFAULT_MC_REPS,
                       threads: int | None = None) -> OrderedMoments:
    q = block_size

    def stat(rng, count):
        t = bartlett_factor(dof, q, rng, count)
        w = np.linalg.eigvalsh(t @ np.swapaxes(t, -1, -2))[:, ::-1]
        return np.concatenate([w, w * w], axis=1)

    summ = montecarlo.run(stat, reps, stream, threads=threads)
    se = summ.stderr
    return OrderedMoments(summ.mean[:q].copy(), summ.mean[q:].copy(), (MC,) * q, se[:q], se[q:])


def ordered_moments(block_size: int, dof: int, stream: RandomStream | None = None, *,
                    mode: str = "auto", reps: int = DEFAULT_MC_REPS,
                    threads: int | None = None) -> OrderedMoments:
    """Moments of the ordered eigenvalues of ``W_q(dof, I_q)``.

    ``mode`` is ``"auto"`` (exact where the expansion applies, Monte Carlo
    otherwise), ``"exact"`` (raise if unavailable) or ``"mc"``.
    """
    if block_size < 1:
        raise ValueError("block size must be positive")
    if dof < block_size:
        raise InsufficientDofError(f"dof={dof} below block size {block_size}")
    if mode not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    use_exact = mode == "exact" or (mode == "auto" and exact_available(block_size, dof))
    if use_exact:
        e1, e2 = exact_ordered_moments(block_size, dof)
        zeros = np.zeros(block_size)
        return OrderedMoments(
            np.array([float(v) for v in e1]), np.array([float(v) for v in e2]),
            (EXACT,) * block_size, zeros, zeros.copy(),
        )
    return mc_ordered_moments(block_size, dof, stream or DEFAULT_STREAM, reps, threads)


@dataclass(frozen=True)
class MomentTable:
    """Moments of ``d_1..d_p``: first block from ``W_m(n, I)``, second from ``W_{p-m}(n-m, I)``."""

    p: int
    m: int
    n: int
    e1: np.ndarray
    e2: np.ndarray
    methods: tuple[str, ...]
    stderr1: np.ndarray = field(repr=False)
    stderr2: np.ndarray = field(repr=False)

    @property
    def context(self) -> tuple[int, int, int]:
        return (self.p, self.m, self.n)

    @property
    def all_exact(self) -> bool:
        return all(t == EXACT for t in self.methods)

    def to_dict(self) -> dict:
        return {
            "p": self.p, "m": self.m, "n": self.n,
            "e1": [float(v) for v in self.e1],
            "e2": [float(v) for v in self.e2],
            "method": list(self.methods),
            "stderr_e1": [float(v) for v in self.stderr1],
            "stderr_e2": [float(v) for v in self.stderr2],
        }


def moment_table(p: int, m: int, n: int, stream: RandomStream | None = None, *,
                 mode: str = "auto", reps: int = DEFAULT_MC_REPS,
                 threads: int | None = None) -> MomentTable:
    if not 1 <= m < p:
        raise ValueError(f"need 1 <= m < p, got m={m}, p={p}")
    if n < p:
        raise InsufficientDofError(f"n={n} below p={p}")
    stream = stream or DEFAULT_STREAM
    first = ordered_moments(m, n, split_stream(stream, 0), mode=mode, reps=reps, threads=threads)
    second = ordered_moments(p - m, n - m, split_stream(stream, 1), mode=mode, reps=reps, threads=threads)
    return MomentTable(
        p, m, n,
        np.concatenate([first.e1, second.e1]),
        np.concatenate([first.e2, second.e2]),
        first.methods + second.methods,
        np.concatenate([first.stderr1, second.stderr1]),
        np.concatenate([first.stderr2, second.stderr2]),
    )
