"""Symmetric-matrix helpers, ordered spectral decompositions and spectra.

Matrices are plain ``numpy`` arrays.  Functions that operate on a single
matrix also accept a stack of matrices with shape ``(..., p, p)`` where that
is noted, which is how the Monte Carlo code calls them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSpectrumWarning,
    DimensionMismatchError,
    NotPositiveDefiniteError,
)

ORTHO_TOL = 1e-10
PD_TOL = 1e-12
TIE_TOL = 1e-10


def as_symmetric(m, *, tol: float = 1e-10) -> np.ndarray:
    """Return ``m`` as a float array with an exactly symmetric copy.

    The upper triangle is taken as canonical, so the result satisfies
    ``a[i, j] == a[j, i]`` bit for bit.
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - np.swapaxes(a, -1, -2)).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    upper = np.triu(a)
    return upper + np.swapaxes(np.triu(a, 1), -1, -2)


def check_orthogonal(q, *, tol: float = ORTHO_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {q.shape}")
    err = np.abs(q.T @ q - np.eye(q.shape[0])).max()
    if err > tol:
        raise ValueError(f"matrix is not orthogonal (max |Q'Q - I| = {err:.3e})")
    return q


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues in descending order with matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray
    reference_frame: np.ndarray | None = None
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        g = self.vectors
        return (g * self.values) @ g.T


def _fix_signs(vectors: np.ndarray, frame: np.ndarray | None) -> np.ndarray:
    # Largest-magnitude entry positive; first index wins among equal magnitudes.
    idx = np.argmax(np.abs(vectors), axis=-2)
    pivot = np.take_along_axis(vectors, idx[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(pivot < 0, -1.0, 1.0)
    if frame is not None:
        diag = np.einsum("ij,...ij->...j", frame, vectors)
        sign = np.where(diag > 0, 1.0, np.where(diag < 0, -1.0, sign))
    return vectors * sign[..., None, :]


def eigh_descending(m: np.ndarray, frame: np.ndarray | None = None):
    """Batched ordered decomposition, no validation.

    Returns ``(values, vectors)`` with values sorted descending along the last
    axis (ties keep LAPACK's column order) and columns sign-fixed so that
    ``diag(frame' G) > 0`` when a frame is given.
    """
    w, v = np.linalg.eigh(m)
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, _fix_signs(v, frame)


def spectral_decompose(m, frame=None) -> SpectralDecomp:
    """Decompose a symmetric positive definite matrix as ``G diag(l) G'``.

    Parameters
    ----------
    m : array_like, shape (p, p)
        Symmetric positive definite input.
    frame : array_like, shape (p, p), optional
        Orthogonal reference frame.  When given, each eigenvector column is
        oriented so that ``frame' G`` has a positive diagonal.  Otherwise the
        largest-magnitude entry of each column is made positive.

    Raises
    ------
    NotPositiveDefiniteError
        If an eigenvalue is at most ``1e-12 * trace(m)``.
    """
    a = as_symmetric(m)
    if a.ndim != 2:
        raise DimensionMismatchError("spectral_decompose takes a single matrix")
    p = a.shape[0]
    if frame is not None:
        frame = check_orthogonal(frame)
        if frame.shape[0] != p:
            raise DimensionMismatchError("frame and matrix dimensions differ")
    w, v = eigh_descending(a, frame)
    tol = PD_TOL * np.trace(a)
    if w[-1] <= tol:
        raise NotPositiveDefiniteError(
            f"smallest eigenvalue {w[-1]:.3e} is not above tolerance {tol:.3e}"
        )
    degenerate = bool(p > 1 and np.any(w[:-1] - w[1:] <= TIE_TOL * w[:-1]))
    if degenerate:
        warnings.warn("repeated eigenvalues in decomposition", DegenerateSpectrumWarning, stacklevel=2)
    return SpectralDecomp(values=w, vectors=v, reference_frame=frame, degenerate=degenerate)


def relative_rotation(gamma, g) -> np.ndarray:
    """Return ``gamma' g``; works on stacks of ``g``."""
    gamma = np.asarray(gamma, dtype=float)
    g = np.asarray(g, dtype=float)
    if gamma.shape[-1] != g.shape[-2] or gamma.shape[-2] != g.shape[-2]:
        raise DimensionMismatchError("rotation dimensions differ")
    return np.swapaxes(gamma, -1, -2) @ g


@dataclass(frozen=True)
class BlockPartition:
    """Cut points ``0 = m_0 < m_1 < ... < m_k = p`` of the index range."""

    cut_points: tuple[int, ...]

    def __post_init__(self):
        cuts = tuple(int(c) for c in self.cut_points)
        if len(cuts) < 2 or cuts[0] != 0:
            raise ValueError("cut points must start at 0 and contain at least one block")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cut points must be strictly increasing: {cuts}")
        object.__setattr__(self, "cut_points", cuts)

    @classmethod
    def from_sizes(cls, sizes) -> "BlockPartition":
        return cls(tuple(np.concatenate([[0], np.cumsum(sizes)]).astype(int)))

    @classmethod
    def two_block(cls, p: int, m: int) -> "BlockPartition":
        if not 1 <= m < p:
            raise ValueError(f"need 1 <= m < p, got m={m}, p={p}")
        return cls((0, m, p))

    @property
    def p(self) -> int:
        return self.cut_points[-1]

    @property
    def k(self) -> int:
        return len(self.cut_points) - 1

    @property
    def sizes(self) -> tuple[int, ...]:
        c = self.cut_points
        return tuple(b - a for a, b in zip(c, c[1:]))

    def block_slice(self, s: int) -> slice:
        """Index range of block ``s`` (0-based)."""
        if not 0 <= s < self.k:
            raise IndexError(f"block index {s} out of range for {self.k} blocks")
        return slice(self.cut_points[s], self.cut_points[s + 1])

    def block_of(self) -> np.ndarray:
        """Block index of every coordinate, length p."""
        return np.repeat(np.arange(self.k), self.sizes)


def block_view(m, partition: BlockPartition, s: int, t: int) -> np.ndarray:
    """Copy of the ``(s, t)`` block (0-based block indices); works on stacks."""
    a = np.asarray(m)
    if a.shape[-1] != partition.p or a.shape[-2] != partition.p:
        raise DimensionMismatchError("matrix does not match partition")
    return a[..., partition.block_slice(s), partition.block_slice(t)].copy()


@dataclass(frozen=True)
class EigenSpec:
    """Population spectrum ``lambda_i = xi_i * scale[block(i)]``."""

    partition: BlockPartition
    xi: tuple[float, ...]
    scales: tuple[float, ...]
    _lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xi = tuple(float(x) for x in self.xi)
        scales = tuple(float(a) for a in self.scales)
        if len(xi) != self.partition.p:
            raise DimensionMismatchError("xi length differs from partition dimension")
        if len(scales) != self.partition.k:
            raise DimensionMismatchError("need one scale per block")
        if min(xi) <= 0 or min(scales) <= 0:
            raise ValueError("xi and scales must be positive")
        if any(b > a for a, b in zip(scales, scales[1:])):
            raise ValueError("block scales must be non-increasing")
        lam = np.array(xi) * np.array(scales)[self.partition.block_of()]
        if np.any(np.diff(lam) > 0):
            raise ValueError("resulting eigenvalues are not non-increasing")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "_lam", lam)

    @classmethod
    def two_block(cls, p: int, m: int, beta: float, alpha: float = 1.0, xi=None) -> "EigenSpec":
        xi = (1.0,) * p if xi is None else xi
        return cls(BlockPartition.two_block(p, m), tuple(xi), (alpha, beta))

    @property
    def p(self) -> int:
        return self.partition.p

    def eigenvalues(self) -> np.ndarray:
        return self._lam.copy()

    def block_scale_per_index(self) -> np.ndarray:
        return np.array(self.scales)[self.partition.block_of()]


def build_sigma(spec: EigenSpec, gamma=None) -> np.ndarray:
    """Population covariance ``gamma diag(lambda) gamma'`` (identity frame by default)."""
    lam = spec.eigenvalues()
    if gamma is None:
        return np.diag(lam)
    gamma = check_orthogonal(gamma)
    if gamma.shape[0] != spec.p:
        raise DimensionMismatchError("gamma dimension differs from spectrum")
    sigma = (gamma * lam) @ gamma.T
    return as_symmetric(sigma, tol=1e-8)


def random_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-corrected)."""
    z = rng.standard_normal((p, p))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))
