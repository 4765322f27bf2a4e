"""Orthogonally equivariant estimators ``G diag(c_i l_i) G'`` and their coefficient rules."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    InsufficientDofError,
    NegativeCoefficientError,
    SingularSystemError,
)
from .linalg import spectral_decompose
from .moments import MomentTable, moment_table

RESIDUAL_TOL = 1e-8


class EstimatorKind(str, enum.Enum):
    U = "u"
    SDS = "sds"
    KG = "kg"
    MA1 = "ma1"
    MA2 = "ma2"
    CUSTOM = "custom"

    @property
    def label(self) -> str:
        return {"u": "U", "sds": "SDS", "kg": "KG", "ma1": "MA1", "ma2": "MA2"}.get(self.value, "custom")


STANDARD_KINDS = (EstimatorKind.U, EstimatorKind.SDS, EstimatorKind.KG, EstimatorKind.MA1, EstimatorKind.MA2)


@dataclass(frozen=True)
class CoefficientVector:
    c: np.ndarray
    kind: EstimatorKind
    context: tuple[int, int | None, int]

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coefficients must be a nonempty vector")
        if np.any(~np.isfinite(c)) or np.any(c <= 0):
            raise NegativeCoefficientError(f"coefficients must be positive, got {c}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "kind", EstimatorKind(self.kind))

    @property
    def p(self) -> int:
        return self.c.size

    def __len__(self):
        return self.c.size


def custom(c, m: int | None = None, n: int = 0) -> CoefficientVector:
    c = np.asarray(c, dtype=float)
    return CoefficientVector(c, EstimatorKind.CUSTOM, (c.size, m, n))


def solve_refined(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a small symmetric system by Cholesky (LU if indefinite) plus one refinement step."""
    try:
        factor = scipy.linalg.cho_factor(a)
        solve = lambda r: scipy.linalg.cho_solve(factor, r)  # noqa: E731
    except np.linalg.LinAlgError:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(a)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(str(exc)) from exc
        piv = np.abs(np.diag(lu[0]))
        if not np.all(np.isfinite(piv)) or piv.min() <= np.finfo(float).eps * max(piv.max(), 1.0) * a.shape[0]:
            raise SingularSystemError("system matrix is singular")
        solve = lambda r: scipy.linalg.lu_solve(lu, r)  # noqa: E731
    x = solve(b)
    x = x + solve(b - a @ x)
    resid = np.abs(a @ x - b).max()
    if not np.isfinite(resid) or resid > RESIDUAL_TOL * max(np.abs(b).max(), 1.0):
        raise SingularSystemError(f"residual {resid:.3e} too large")
    return x


def coeffs_u(p: int, n: int) -> CoefficientVector:
    if n < 1:
        raise InsufficientDofError("n must be at least 1")
    return CoefficientVector(np.full(p, 1.0 / n), EstimatorKind.U, (p, None, n))


def _check_dof(p: int, n: int) -> None:
    if n < p:
        raise InsufficientDofError(f"n={n} below p={p}")


def coeffs_sds(p: int, n: int) -> CoefficientVector:
    _check_dof(p, n)
    i = np.arange(1, p + 1)
    return CoefficientVector(1.0 / (n + p + 1 - 2 * i), EstimatorKind.SDS, (p, None, n))


def kg_system(p: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, p + 1)
    r = n + p - 2 * i + 1
    # off-diagonal a_ij uses the larger of the two indices
    a = np.minimum.outer(r, r).astype(float)
    a[np.diag_indices(p)] = r * (r + 2)
    return a, r.astype(float)


def coeffs_kg(p: int, n: int) -> CoefficientVector:
    _check_dof(p, n)
    a, b = kg_system(p, n)
    return CoefficientVector(solve_refined(a, b), EstimatorKind.KG, (p, None, n))


def ma_system(table: MomentTable) -> tuple[np.ndarray, np.ndarray]:
    """The ``(b, A)`` pair of the identity-block asymptotic risks.

    Stein risk is ``sum(b_i c_i - log c_i) + const`` and quadratic risk is
    ``c'Ac - 2b'c + p``.
    """
    p, m = table.p, table.m
    k = p - m
    e1, e2 = table.e1, table.e2
    b = e1.copy()
    b[:m] += k
    a = np.zeros((p, p))
    a[:m, :m] = k
    idx = np.arange(m)
    a[idx, idx] = e2[:m] + 2 * k * e1[:m] + k * (k + 2)
    tail = np.arange(m, p)
    a[tail, tail] = e2[m:]
    a[:m, m:] = e1[m:][None, :]
    a[m:, :m] = e1[m:][:, None]
    return b, a


def _table_for(p, m, n, moments):
    if moments is None:
        return moment_table(p, m, n)
    if moments.context != (p, m, n):
        raise DimensionMismatchError(f"moment table is for {moments.context}, not {(p, m, n)}")
    return moments


def coeffs_ma1(p: int, m: int, n: int, moments: MomentTable | None = None) -> CoefficientVector:
    b, _ = ma_system(_table_for(p, m, n, moments))
    return CoefficientVector(1.0 / b, EstimatorKind.MA1, (p, m, n))


def coeffs_ma2(p: int, m: int, n: int, moments: MomentTable | None = None) -> CoefficientVector:
    b, a = ma_system(_table_for(p, m, n, moments))
    c = solve_refined(a, b)
    if np.any(c <= 0):
        raise NegativeCoefficientError(f"solved coefficients not positive: {c}")
    return CoefficientVector(c, EstimatorKind.MA2, (p, m, n))


def coefficients(kind, p: int, m: int, n: int, moments: MomentTable | None = None) -> CoefficientVector:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.U:
        return coeffs_u(p, n)
    if kind is EstimatorKind.SDS:
        return coeffs_sds(p, n)
    if kind is EstimatorKind.KG:
        return coeffs_kg(p, n)
    if kind is EstimatorKind.MA1:
        return coeffs_ma1(p, m, n, moments)
    if kind is EstimatorKind.MA2:
        return coeffs_ma2(p, m, n, moments)
    raise ValueError("custom coefficients must be built with custom()")


def all_coefficients(p: int, m: int, n: int, moments: MomentTable | None = None) -> dict:
    moments = _table_for(p, m, n, moments)
    return {kind: coefficients(kind, p, m, n, moments) for kind in STANDARD_KINDS}


def _as_array(c) -> np.ndarray:
    return c.c if isinstance(c, CoefficientVector) else np.asarray(c, dtype=float)


def assemble(values: np.ndarray, vectors: np.ndarray, c) -> np.ndarray:
    """``G diag(c * l) G'`` for one decomposition or a stack of them."""
    psi = values * _as_array(c)
    out = (vectors * psi[..., None, :]) @ np.swapaxes(vectors, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def apply_estimator(s, c, frame=None) -> np.ndarray:
    """Estimate ``Sigma`` from a Wishart matrix ``s`` with coefficients ``c``."""
    c = _as_array(c)
    dec = spectral_decompose(s, frame)
    if c.size != dec.dim:
        raise DimensionMismatchError("coefficient length differs from matrix dimension")
    return assemble(dec.values, dec.vectors, c)
