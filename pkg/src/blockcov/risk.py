"""Stein and quadratic losses, analytic asymptotic risks and Monte Carlo risks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import log

import numpy as np
import scipy.linalg
from scipy.special import digamma

from . import montecarlo
from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .estimators import (
    STANDARD_KINDS,
    CoefficientVector,
    EstimatorKind,
    all_coefficients,
    assemble,
    ma_system,
)
from .linalg import EigenSpec, check_orthogonal, eigh_descending
from .moments import DEFAULT_STREAM, MomentTable, moment_table
from .sampling import RandomStream, bartlett_factor, split_stream

DEFAULT_RISK_REPS = 100_000


class LossKind(str, enum.Enum):
    STEIN = "stein"
    QUADRATIC = "quadratic"

    @property
    def index(self) -> int:
        return 1 if self is LossKind.STEIN else 2


BOTH_LOSSES = (LossKind.STEIN, LossKind.QUADRATIC)


class RiskMethod(str, enum.Enum):
    ANALYTIC = "analytic_asymptotic"
    MC_FINITE = "mc_finite"
    MC_LIMIT = "mc_limitdist"


@dataclass(frozen=True)
class RiskReport:
    loss: LossKind
    estimator: EstimatorKind
    value: float
    method: RiskMethod
    stderr: float = 0.0
    rrr_vs_u: float | None = None
    context: tuple = ()

    def with_rrr(self, r_u: "RiskReport") -> "RiskReport":
        return RiskReport(self.loss, self.estimator, self.value, self.method, self.stderr,
                          rrr(self, r_u), self.context)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss.value, "estimator": self.estimator.label, "value": self.value,
            "method": self.method.value, "stderr": self.stderr, "rrr_vs_u": self.rrr_vs_u,
            "context": list(self.context),
        }


@dataclass(frozen=True)
class RiskDecomposition:
    """Limit risk split as ``r1d + r2d + r3d``; ``r3d`` is the cross-block term."""

    loss: LossKind
    r1d: float
    r2d: float
    r3d: float
    stderr: float
    parts_stderr: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @property
    def total(self) -> float:
        return self.r1d + self.r2d + self.r3d


def elog_chi2(k) -> float:
    """``E[log X]`` for ``X ~ chi2_k``: ``digamma(k/2) + log 2``."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("degrees of freedom must be positive")
    out = digamma(k / 2) + log(2.0)
    return float(out) if out.ndim == 0 else out


# -- losses -----------------------------------------------------------------

def whitened_losses(m: np.ndarray):
    """Stein and quadratic losses of a whitened estimate ``m = Sigma^{-1/2} Sigma_hat Sigma^{-1/2}'``.

    Works on stacks; returns ``(stein, quadratic)`` arrays.
    """
    p = m.shape[-1]
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("estimate is not positive definite") from exc
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    tr = np.trace(m, axis1=-2, axis2=-1)
    stein = tr - logdet - p
    dev = m - np.eye(p)
    quad = np.einsum("...ij,...ij->...", dev, dev)
    return stein, quad


def _inverse_cholesky(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    try:
        low = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("sigma is not positive definite") from exc
    return scipy.linalg.solve_triangular(low, np.eye(sigma.shape[0]), lower=True)


def loss(kind, sigma_hat, sigma):
    """Stein loss ``tr(H) - log det(H) - p`` or quadratic loss ``tr(H - I)^2``, ``H = Sigma_hat Sigma^{-1}``.

    ``sigma_hat`` may be a stack of estimates.  Both matrices must be
    positive definite; ``Sigma`` is handled through its Cholesky factor.
    """
    kind = LossKind(kind)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma_hat.shape[-2:] != sigma.shape:
        raise DimensionMismatchError("sigma_hat and sigma dimensions differ")
    li = _inverse_cholesky(sigma)
    m = li @ sigma_hat @ li.T
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    stein, quad = whitened_losses(m)
    out = stein if kind is LossKind.STEIN else quad
    # exact equality should read as zero, not as -1e-16
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


# -- analytic asymptotic risk -------------------------------------------------

def asymptotic_risk_identity_blocks(loss_kind, c, moments: MomentTable) -> RiskReport:
    """Limit risk as ``beta/alpha -> 0`` when both blocks have identity shape.

    Stein: ``sum(b_i c_i - log c_i) - sum E log chi2_{n-i+1} - p``.
    Quadratic: ``c'Ac - 2b'c + p``.  The standard error is the first-order
    propagation of Monte Carlo moment errors (zero when all moments are exact),
    treating the moment entries as independent.
    """
    kind = LossKind(loss_kind)
    coef = c.c if isinstance(c, CoefficientVector) else np.asarray(c, dtype=float)
    est = c.kind if isinstance(c, CoefficientVector) else EstimatorKind.CUSTOM
    p, m, n = moments.context
    if coef.size != p:
        raise DimensionMismatchError("coefficients and moment table differ in dimension")
    b, a = ma_system(moments)
    k = p - m
    if kind is LossKind.STEIN:
        i = np.arange(1, p + 1)
        value = float(np.sum(b * coef - np.log(coef)) - np.sum(elog_chi2(n - i + 1)) - p)
        g1 = coef
        g2 = np.zeros(p)
    else:
        value = float(coef @ a @ coef - 2 * b @ coef + p)
        g1 = np.empty(p)
        g1[:m] = 2 * k * coef[:m] ** 2 - 2 * coef[:m]
        g1[m:] = 2 * coef[m:] * coef[:m].sum() - 2 * coef[m:]
        g2 = coef ** 2
    se = float(np.sqrt(np.sum((g1 * moments.stderr1) ** 2 + (g2 * moments.stderr2) ** 2)))
    return RiskReport(kind, est, value, RiskMethod.ANALYTIC, se, None, (p, m, n))


def rrr(r: RiskReport, r_u: RiskReport) -> float:
    """Risk reduction rate in percent relative to the unbiased estimator's risk."""
    if r.loss != r_u.loss or tuple(r.context) != tuple(r_u.context):
        raise ValueError("risk reports differ in loss or context")
    if r_u.value == 0:
        raise ZeroDivisionError("reference risk is zero")
    return 100.0 * (r_u.value - r.value) / r_u.value


@dataclass(frozen=True)
class RiskTableBlock:
    """Coefficients and asymptotic risks of the five estimators at one ``(p, m, n)``."""

    p: int
    m: int
    n: int
    coefficients: dict
    risks: dict
    moments: MomentTable

    def risk(self, loss_kind, kind) -> RiskReport:
        return self.risks[(LossKind(loss_kind), EstimatorKind(kind))]


def risk_table_block(p: int, m: int, n: int, moments: MomentTable | None = None, **moment_kw) -> RiskTableBlock:
    moments = moments or moment_table(p, m, n, **moment_kw)
    coeffs = all_coefficients(p, m, n, moments)
    risks = {}
    for lk in BOTH_LOSSES:
        ref = asymptotic_risk_identity_blocks(lk, coeffs[EstimatorKind.U], moments)
        for kind in STANDARD_KINDS:
            risks[(lk, kind)] = asymptotic_risk_identity_blocks(lk, coeffs[kind], moments).with_rrr(ref)
    return RiskTableBlock(p, m, n, coeffs, risks, moments)


# -- finite-sample Monte Carlo -------------------------------------------------

def _spectral_whitener(spec: EigenSpec, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam = spec.eigenvalues()
    root = gamma * np.sqrt(lam)          # Sigma^{1/2} factor: root root' = Sigma
    whiten = (gamma / np.sqrt(lam)).T    # whiten Sigma whiten' = I
    return root, whiten


def finite_loss_columns(values, vectors, whiten, coeffs, losses=BOTH_LOSSES) -> np.ndarray:
    """Per-replicate losses, one column per ``(loss, estimator)`` pair in loss-major order."""
    cols = {lk: [] for lk in losses}
    for c in coeffs:
        est = assemble(values, vectors, c)
        m = whiten @ est @ whiten.T
        stein, quad = whitened_losses(0.5 * (m + np.swapaxes(m, -1, -2)))
        if LossKind.STEIN in cols:
            cols[LossKind.STEIN].append(stein)
        if LossKind.QUADRATIC in cols:
            cols[LossKind.QUADRATIC].append(quad)
    return np.stack([col for lk in losses for col in cols[lk]], axis=-1)


def draw_decompositions(rng, n: int, root: np.ndarray, frame: np.ndarray, count: int):
    """Ordered decompositions of ``count`` draws of ``W_p(n, root root')``."""
    t = root @ bartlett_factor(n, root.shape[0], rng, count)
    s = t @ np.swapaxes(t, -1, -2)
    return eigh_descending(0.5 * (s + np.swapaxes(s, -1, -2)), frame)


def risk_mc_finite_many(coeffs, spec: EigenSpec, n: int, gamma=None, *, losses=BOTH_LOSSES,
                        reps: int = DEFAULT_RISK_REPS, stream: RandomStream | None = None,
                        threads: int | None = None) -> dict:
    """Finite-sample risks of several estimators on shared Wishart draws.

    Returns ``{(LossKind, EstimatorKind): RiskReport}``.  When several custom
    vectors are passed, keys use their position instead of their kind.
    """
    p = spec.p
    gamma = np.eye(p) if gamma is None else check_orthogonal(gamma)
    if gamma.shape[0] != p:
        raise DimensionMismatchError("gamma dimension differs from spectrum")
    for c in coeffs:
        if len(c) != p:
            raise DimensionMismatchError("coefficient length differs from dimension")
    if n < p:
        raise ValueError(f"n={n} below p={p}")
    losses = tuple(LossKind(lk) for lk in losses)
    root, whiten = _spectral_whitener(spec, gamma)

    def stat(rng, count):
        values, vectors = draw_decompositions(rng, n, root, gamma, count)
        return finite_loss_columns(values, vectors, whiten, coeffs, losses)

    summ = montecarlo.run(stat, reps, stream or DEFAULT_STREAM, threads=threads)
    se = summ.stderr
    kinds = [c.kind if isinstance(c, CoefficientVector) else EstimatorKind.CUSTOM for c in coeffs]
    keyed = [k if kinds.count(k) == 1 else i for i, k in enumerate(kinds)]
    ctx = (p, spec.partition.cut_points, n, spec.scales)
    out = {}
    col = 0
    for lk in losses:
        for kind, key in zip(kinds, keyed):
            out[(lk, key)] = RiskReport(lk, kind, float(summ.mean[col]), RiskMethod.MC_FINITE,
                                        float(se[col]), None, ctx)
            col += 1
    for lk in losses:
        ref = out.get((lk, EstimatorKind.U))
        if ref is not None:
            for key in keyed:
                out[(lk, key)] = out[(lk, key)].with_rrr(ref)
    return out


def risk_mc_finite(loss_kind, estimator, spec: EigenSpec, gamma=None, n: int = 10, *,
                   reps: int = DEFAULT_RISK_REPS, stream: RandomStream | None = None,
                   threads: int | None = None) -> RiskReport:
    """Average loss of ``apply_estimator(S, c, gamma)`` over draws ``S ~ W_p(n, Sigma)``."""
    lk = LossKind(loss_kind)
    res = risk_mc_finite_many([estimator], spec, n, gamma, losses=(lk,), reps=reps,
                              stream=stream, threads=threads)
    return next(iter(res.values()))


# -- limit-distribution Monte Carlo ---------------------------------------------

def _limit_factors(rng, n, m, k, xi1, xi2, count):
    """``Xi^{-1/2} G D^{1/2}`` for both limit Wisharts plus the block eigenvalues."""
    w1 = np.sqrt(xi1)[:, None] * bartlett_factor(n, m, rng, count)
    w2 = np.sqrt(xi2)[:, None] * bartlett_factor(n - m, k, rng, count)
    d1, g1 = eigh_descending(w1 @ np.swapaxes(w1, -1, -2))
    d2, g2 = eigh_descending(w2 @ np.swapaxes(w2, -1, -2))
    a1 = g1 * np.sqrt(d1)[:, None, :] / np.sqrt(xi1)[:, None]
    a2 = g2 * np.sqrt(d2)[:, None, :] / np.sqrt(xi2)[:, None]
    return a1, a2


def _check_limit_args(c, p, m, n, xi1, xi2):
    coef = c.c if isinstance(c, CoefficientVector) else np.asarray(c, dtype=float)
    xi1 = np.ones(m) if xi1 is None else np.asarray(xi1, dtype=float)
    xi2 = np.ones(p - m) if xi2 is None else np.asarray(xi2, dtype=float)
    if not 1 <= m < p or coef.size != p or xi1.size != m or xi2.size != p - m:
        raise DimensionMismatchError("inconsistent p, m, coefficient or xi lengths")
    if np.any(xi1 <= 0) or np.any(xi2 <= 0):
        raise ValueError("xi entries must be positive")
    if n < p:
        raise ValueError(f"n={n} below p={p}")
    return coef, xi1, xi2


def asymptotic_risk_limitdist_mc(loss_kind, c, p: int, m: int, n: int, xi1=None, xi2=None, *,
                                 reps: int = DEFAULT_RISK_REPS, stream: RandomStream | None = None,
                                 threads: int | None = None) -> RiskDecomposition:
    """Limit risk for general block shapes ``Xi_1, Xi_2`` (diagonal, given by ``xi``).

    ``W11 ~ W_m(n, Xi_1)`` and ``W22 ~ W_{p-m}(n-m, Xi_2)`` are sampled;
    ``r1d`` and ``r2d`` are the block losses of ``G_s C_s D_s G_s'``.  The
    cross term is ``(p-m) sum c_1`` for Stein loss.  For quadratic loss it has
    two expectations, estimated on the same draws, plus closed-form parts.
    """
    lk = LossKind(loss_kind)
    coef, xi1, xi2 = _check_limit_args(c, p, m, n, xi1, xi2)
    k = p - m
    c1, c2 = coef[:m], coef[m:]
    sum_c1 = c1.sum()

    def stat(rng, count):
        a1, a2 = _limit_factors(rng, n, m, k, xi1, xi2, count)
        n11 = (a1 * c1) @ np.swapaxes(a1, -1, -2)
        n22 = (a2 * c2) @ np.swapaxes(a2, -1, -2)
        s1, q1 = whitened_losses(0.5 * (n11 + np.swapaxes(n11, -1, -2)))
        s2, q2 = whitened_losses(0.5 * (n22 + np.swapaxes(n22, -1, -2)))
        if lk is LossKind.STEIN:
            return np.stack([s1, s2], axis=-1)
        # tr(C1^2 A1'A1) and tr(A2 C2 A2')
        t1 = np.einsum("i,...ji,...ji->...", c1 ** 2, a1, a1)
        t2 = np.trace(n22, axis1=-2, axis2=-1)
        return np.stack([q1, q2, 2 * k * t1 + 2 * sum_c1 * t2], axis=-1)

    summ = montecarlo.run(stat, reps, stream or DEFAULT_STREAM, threads=threads)
    se = summ.stderr
    if lk is LossKind.STEIN:
        r3 = k * sum_c1
        total_se = float(np.sqrt(summ.cov.sum() / summ.count))
        return RiskDecomposition(lk, float(summ.mean[0]), float(summ.mean[1]), float(r3), total_se,
                                 (float(se[0]), float(se[1]), 0.0))
    pairs = np.outer(c1, c1)
    const = k * (k + 2) * np.sum(c1 ** 2) + k * (pairs.sum() - np.trace(pairs)) - 2 * k * sum_c1
    r3 = float(summ.mean[2] + const)
    total_se = float(np.sqrt(summ.cov.sum() / summ.count))
    return RiskDecomposition(lk, float(summ.mean[0]), float(summ.mean[1]), r3, total_se,
                             (float(se[0]), float(se[1]), float(se[2])))


def limit_risk_single_pass(loss_kind, c, p: int, m: int, n: int, xi1=None, xi2=None, *,
                           reps: int = DEFAULT_RISK_REPS, stream: RandomStream | None = None,
                           threads: int | None = None) -> tuple[float, float]:
    """Full limit loss averaged directly, without splitting into block terms.

    The whitened limit estimate is ``V C V'`` with
    ``V = [[Xi1^{-1/2} G11 D1^{1/2}, 0], [Z, Xi2^{-1/2} G22 D2^{1/2}]]`` and
    ``Z`` an i.i.d. standard normal ``(p-m) x m`` matrix.  Returns
    ``(mean, stderr)``.
    """
    lk = LossKind(loss_kind)
    coef, xi1, xi2 = _check_limit_args(c, p, m, n, xi1, xi2)
    k = p - m

    def stat(rng, count):
        a1, a2 = _limit_factors(rng, n, m, k, xi1, xi2, count)
        v = np.zeros((count, p, p))
        v[:, :m, :m] = a1
        v[:, m:, m:] = a2
        v[:, m:, :m] = rng.standard_normal((count, k, m))
        nn = (v * coef) @ np.swapaxes(v, -1, -2)
        stein, quad = whitened_losses(0.5 * (nn + np.swapaxes(nn, -1, -2)))
        return (stein if lk is LossKind.STEIN else quad)[:, None]

    summ = montecarlo.run(stat, reps, split_stream(stream or DEFAULT_STREAM, 7), threads=threads)
    return float(summ.mean[0]), float(summ.stderr[0])
