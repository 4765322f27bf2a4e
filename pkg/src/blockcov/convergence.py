"""Transformed eigen-statistics and their convergence to the block-wise limit laws.

For a spectrum split into blocks with scales ``alpha_1 > ... > alpha_k`` the
statistics

    W~_ss = G~_ss D_s G~_ss'
    Z~_st = (alpha_t / alpha_s)^{1/2} Xi_s^{-1/2} G~_st D_t^{1/2},   t < s

with ``G~ = Gamma' G`` and ``d_i = l_i / alpha_[i]`` converge, as the scale
ratios shrink, to independent Wisharts ``W(n - m_{s-1}, Xi_s)`` and i.i.d.
standard normal matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import montecarlo
from .errors import DimensionMismatchError
from .estimators import STANDARD_KINDS
from .linalg import EigenSpec, check_orthogonal, spectral_decompose
from .moments import DEFAULT_STREAM
from .risk import (
    BOTH_LOSSES,
    RiskMethod,
    RiskReport,
    _spectral_whitener,
    draw_decompositions,
    finite_loss_columns,
    risk_table_block,
)
from .sampling import RandomStream, split_stream

DEFAULT_BETA_GRID = (1.0, 0.8, 0.6, 0.4, 0.2, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
DEFAULT_CONVERGENCE_REPS = 1_000_000
LEVELS = (0.05, 0.95)
PROB_NAMES = tuple(f"Prob {i}{s}" for s in "ab" for i in range(1, 6))


# -- quantiles ----------------------------------------------------------------

def _check_level(q):
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must lie strictly between 0 and 1")
    return q


def chi2_quantile(k, q):
    """Lower ``q`` point of ``chi2_k`` (inverse incomplete gamma, one Newton step)."""
    q = _check_level(q)
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("degrees of freedom must be positive")
    a = k / 2
    x = special.gammaincinv(a, q)
    # Newton on P(a, x) - q in the half-scale variable
    dens = np.exp((a - 1) * np.log(x) - x - special.gammaln(a))
    step = np.where(dens > 0, (special.gammainc(a, x) - q) / np.where(dens > 0, dens, 1.0), 0.0)
    x = np.where(x - step > 0, x - step, x)
    out = 2 * x
    return float(out) if out.ndim == 0 else out


def normal_quantile(q):
    """Lower ``q`` point of the standard normal (``ndtri`` plus one Newton step)."""
    q = _check_level(q)
    z = special.ndtri(q)
    z = z - (special.ndtr(z) - q) / (np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi))
    return float(z) if np.ndim(z) == 0 else z


# -- transformed statistics ---------------------------------------------------

@dataclass(frozen=True)
class TransformedStats:
    """``W~_ss`` (0-based list) and ``Z~_st`` keyed by 0-based ``(s, t)``, ``t < s``.

    Arrays carry a leading replicate axis when built from a stack of draws.
    """

    w_blocks: list
    z_blocks: dict
    d: np.ndarray
    g_tilde: np.ndarray


def _transform(values, vectors, gamma, spec: EigenSpec) -> TransformedStats:
    part = spec.partition
    scales = np.asarray(spec.scales)
    d = values / spec.block_scale_per_index()
    gt = np.swapaxes(gamma, -1, -2) @ vectors
    xi = np.asarray(spec.xi)
    w_blocks, z_blocks = [], {}
    for s in range(part.k):
        sl = part.block_slice(s)
        g = gt[..., sl, sl]
        w = (g * d[..., None, sl]) @ np.swapaxes(g, -1, -2)
        w_blocks.append(0.5 * (w + np.swapaxes(w, -1, -2)))
        for t in range(s):
            tl = part.block_slice(t)
            z = gt[..., sl, tl] * np.sqrt(d[..., None, tl]) / np.sqrt(xi[sl])[:, None]
            z_blocks[(s, t)] = np.sqrt(scales[t] / scales[s]) * z
    return TransformedStats(w_blocks, z_blocks, d, gt)


def transformed_stats(s, gamma, spec: EigenSpec) -> TransformedStats:
    """Transformed statistics of one sample matrix ``s`` drawn with ``Sigma = Gamma diag(lambda) Gamma'``.

    ``s`` is decomposed with ``gamma`` as the sign frame, so that
    ``diag(Gamma' G) > 0``.
    """
    gamma = check_orthogonal(gamma)
    if gamma.shape[0] != spec.p:
        raise DimensionMismatchError("gamma dimension differs from spectrum")
    dec = spectral_decompose(s, gamma)
    return _transform(dec.values, dec.vectors, gamma, spec)


def transformed_stats_batch(values, vectors, gamma, spec: EigenSpec) -> TransformedStats:
    """Vectorised :func:`transformed_stats` for already ordered, sign-fixed decompositions."""
    return _transform(values, vectors, gamma, spec)


# -- probability table ---------------------------------------------------------

@dataclass(frozen=True)
class ProbCutoffs:
    chi_first: tuple[float, float]
    chi_second: tuple[float, float]
    z: tuple[float, float]


def prob_cutoffs(n: int, m: int) -> ProbCutoffs:
    lv = np.array(LEVELS)
    return ProbCutoffs(tuple(chi2_quantile(n, lv)), tuple(chi2_quantile(n - m, lv)), tuple(normal_quantile(lv)))


def prob_indicators(ts: TransformedStats, cut: ProbCutoffs) -> np.ndarray:
    """Indicator columns in :data:`PROB_NAMES` order for a two-block stack."""
    w1, w2 = ts.w_blocks[0], ts.w_blocks[1]
    z = ts.z_blocks[(1, 0)]
    stats = [
        (w1[..., 0, 0], cut.chi_first),
        (w2[..., 0, 0], cut.chi_second),
        (w2[..., -1, -1], cut.chi_second),
        (z[..., 0, 0], cut.z),
        (z[..., -1, 0], cut.z),
    ]
    cols = [x <= q[j] for j in range(2) for x, q in stats]
    return np.stack(cols, axis=-1).astype(float)


def asymptotic_probs() -> dict:
    return {name: LEVELS[0] if name.endswith("a") else LEVELS[1] for name in PROB_NAMES}


@dataclass
class ConvergenceReport:
    p: int
    m: int
    n: int
    beta_grid: tuple
    probs: list
    prob_stderr: list
    risks: list
    asymptotic_risks: dict
    reps: int
    seed: int
    random_gamma: bool = False
    meta: dict = field(default_factory=dict)

    def risk_rows(self):
        """``(label, values per beta, asymptotic value)`` rows, ``Risk 1_U`` first."""
        rows = []
        for lk in BOTH_LOSSES:
            for kind in STANDARD_KINDS:
                label = f"Risk {lk.index}_{kind.label}"
                vals = [r[(lk, kind)].value for r in self.risks]
                rows.append((label, vals, self.asymptotic_risks[(lk, kind)].value))
        return rows

    def prob_rows(self):
        nominal = asymptotic_probs()
        order = [f"Prob {i}a" for i in range(1, 6)] + [f"Prob {i}b" for i in range(1, 6)]
        return [(name, [pr[name] for pr in self.probs], nominal[name]) for name in order]


def convergence_sweep(p: int, m: int, n: int, beta_grid=DEFAULT_BETA_GRID, *,
                      reps: int = DEFAULT_CONVERGENCE_REPS, stream: RandomStream | None = None,
                      gamma=None, risks: bool = True, threads: int | None = None) -> ConvergenceReport:
    """Empirical Prob 1a..5b and per-estimator risks over a grid of ``beta`` (``alpha = 1``).

    Every ``beta`` uses its own child stream; probabilities and risks share
    the same Wishart draws.
    """
    if not 1 <= m < p:
        raise ValueError(f"need 1 <= m < p, got m={m}, p={p}")
    if n < p:
        raise ValueError(f"n={n} below p={p}")
    stream = stream or DEFAULT_STREAM
    gamma = np.eye(p) if gamma is None else check_orthogonal(gamma)
    block = risk_table_block(p, m, n)
    coeffs = [block.coefficients[k] for k in STANDARD_KINDS]
    cut = prob_cutoffs(n, m)
    probs, prob_se, risk_list = [], [], []
    for bi, beta in enumerate(beta_grid):
        spec = EigenSpec.two_block(p, m, float(beta))
        root, whiten = _spectral_whitener(spec, gamma)

        def stat(rng, count, spec=spec, root=root, whiten=whiten):
            values, vectors = draw_decompositions(rng, n, root, gamma, count)
            ind = prob_indicators(_transform(values, vectors, gamma, spec), cut)
            if not risks:
                return ind
            return np.concatenate([ind, finite_loss_columns(values, vectors, whiten, coeffs)], axis=-1)

        summ = montecarlo.run(stat, reps, split_stream(stream, bi), threads=threads)
        se = summ.stderr
        probs.append({name: float(summ.mean[j]) for j, name in enumerate(PROB_NAMES)})
        # binomial standard error of each indicator mean
        prob_se.append({name: float(np.sqrt(summ.mean[j] * (1 - summ.mean[j]) / summ.count))
                        for j, name in enumerate(PROB_NAMES)})
        if risks:
            ctx = (p, m, n, float(beta))
            row, col = {}, len(PROB_NAMES)
            for lk in BOTH_LOSSES:
                for c in coeffs:
                    row[(lk, c.kind)] = RiskReport(lk, c.kind, float(summ.mean[col]), RiskMethod.MC_FINITE,
                                                   float(se[col]), None, ctx)
                    col += 1
            for lk in BOTH_LOSSES:
                ref = row[(lk, STANDARD_KINDS[0])]
                for c in coeffs:
                    row[(lk, c.kind)] = row[(lk, c.kind)].with_rrr(ref)
            risk_list.append(row)
    return ConvergenceReport(p, m, n, tuple(float(b) for b in beta_grid), probs, prob_se, risk_list,
                             block.risks if risks else {}, reps, stream.seed, random_gamma=not np.allclose(gamma, np.eye(p)))


# -- limit-law moment checks ----------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    estimate: float
    target: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.estimate - self.target) / self.stderr if self.stderr > 0 else (
            0.0 if self.estimate == self.target else np.inf)

    def passed(self, k: float = 5.0) -> bool:
        return abs(self.z) <= k


@dataclass
class LimitCheckReport:
    checks: list
    reps: int
    cut_points: tuple
    scales: tuple

    def passed(self, k: float = 5.0) -> bool:
        return all(c.passed(k) for c in self.checks)

    def failures(self, k: float = 5.0) -> list:
        return [c for c in self.checks if not c.passed(k)]


def multiblock_limit_check(spec: EigenSpec, n: int, *, reps: int = 100_000,
                           stream: RandomStream | None = None, gamma=None,
                           threads: int | None = None) -> LimitCheckReport:
    """Compare first moments and cross-correlations of the transformed statistics with their limits.

    Checks, each at a Monte Carlo standard error:

    * every upper-triangle entry of ``mean(W~_ss)`` against ``(n - m_{s-1}) Xi_s``;
    * every ``Z~_st`` entry against mean 0 and second moment 1;
    * zero correlation between block traces, between ``(W~_ss)_11`` across
      blocks, and between each block trace and every ``Z~`` entry.
    """
    part = spec.partition
    p = spec.p
    if n < p:
        raise ValueError(f"n={n} below p={p}")
    gamma = np.eye(p) if gamma is None else check_orthogonal(gamma)
    root, _ = _spectral_whitener(spec, gamma)
    xi = np.asarray(spec.xi)
    names, targets = [], []
    for s in range(part.k):
        sl = part.block_slice(s)
        dof = n - part.cut_points[s]
        for i, j in zip(*np.triu_indices(part.sizes[s])):
            names.append(f"W{s + 1}{s + 1}[{i + 1},{j + 1}] mean")
            targets.append(dof * xi[sl][i] if i == j else 0.0)
    z_keys = [(s, t) for s in range(part.k) for t in range(s)]
    for s, t in z_keys:
        for i in range(part.sizes[s]):
            for j in range(part.sizes[t]):
                names.append(f"Z{s + 1}{t + 1}[{i + 1},{j + 1}] mean")
                targets.append(0.0)
                names.append(f"Z{s + 1}{t + 1}[{i + 1},{j + 1}] second moment")
                targets.append(1.0)
    n_moment = len(names)

    def stat(rng, count):
        values, vectors = draw_decompositions(rng, n, root, gamma, count)
        ts = _transform(values, vectors, gamma, spec)
        cols = []
        for w in ts.w_blocks:
            iu = np.triu_indices(w.shape[-1])
            cols.append(w[:, iu[0], iu[1]])
        for key in z_keys:
            z = ts.z_blocks[key].reshape(count, -1)
            cols.append(np.stack([z, z * z], axis=-1).reshape(count, -1))
        traces = [np.trace(w, axis1=-2, axis2=-1)[:, None] for w in ts.w_blocks]
        firsts = [w[:, 0, 0][:, None] for w in ts.w_blocks]
        return np.concatenate(cols + traces + firsts, axis=1)

    summ = montecarlo.run(stat, reps, stream or DEFAULT_STREAM, threads=threads)
    se = summ.stderr
    checks = [Check(nm, float(summ.mean[i]), tg, float(se[i])) for i, (nm, tg) in enumerate(zip(names, targets))]
    corr = summ.corr()
    tr0 = n_moment
    f0 = n_moment + part.k
    # under independence a sample correlation has standard error about 1/sqrt(reps)
    cse = 1.0 / np.sqrt(summ.count)
    for s in range(part.k):
        for t in range(s + 1, part.k):
            checks.append(Check(f"corr(tr W{s + 1}{s + 1}, tr W{t + 1}{t + 1})", float(corr[tr0 + s, tr0 + t]), 0.0, cse))
            checks.append(Check(f"corr(W{s + 1}{s + 1}[1,1], W{t + 1}{t + 1}[1,1])", float(corr[f0 + s, f0 + t]), 0.0, cse))
    for s in range(part.k):
        for idx, nm in enumerate(names):
            if nm.startswith("Z") and nm.endswith("mean"):
                checks.append(Check(f"corr(tr W{s + 1}{s + 1}, {nm[:-5]})", float(corr[tr0 + s, idx]), 0.0, cse))
    return LimitCheckReport(checks, reps, part.cut_points, spec.scales)


def offdiag_exceedance(p: int, m: int, n: int, beta_grid=DEFAULT_BETA_GRID, eps: float = 0.1, *,
                       reps: int = 100_000, stream: RandomStream | None = None,
                       threads: int | None = None) -> list:
    """``P(max |G~_21| > eps)`` for each ``beta``; returns ``(prob, stderr)`` pairs."""
    stream = stream or DEFAULT_STREAM
    gamma = np.eye(p)
    out = []
    for bi, beta in enumerate(beta_grid):
        spec = EigenSpec.two_block(p, m, float(beta))
        root, _ = _spectral_whitener(spec, gamma)

        def stat(rng, count, root=root):
            _, vectors = draw_decompositions(rng, n, root, gamma, count)
            return (np.abs(vectors[:, m:, :m]).max(axis=(1, 2)) > eps).astype(float)[:, None]

        summ = montecarlo.run(stat, reps, split_stream(stream, bi), threads=threads)
        out.append((float(summ.mean[0]), float(summ.stderr[0])))
    return out
