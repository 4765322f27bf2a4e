import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcov.errors import NotPositiveDefiniteError
from blockcov.estimators import EstimatorKind, all_coefficients, coeffs_ma2, coeffs_u, custom
from blockcov.linalg import BlockPartition, EigenSpec, random_orthogonal
from blockcov.moments import moment_table
from blockcov.risk import (
    LossKind,
    RiskReport,
    asymptotic_risk_identity_blocks,
    asymptotic_risk_limitdist_mc,
    elog_chi2,
    limit_risk_single_pass,
    loss,
    risk_mc_finite,
    risk_mc_finite_many,
    risk_table_block,
    rrr,
)
from blockcov.sampling import RandomStream, sample_chi2


def _spd(p, rng):
    x = rng.standard_normal((p + 2, p))
    return x.T @ x + 0.05 * np.eye(p)


def test_loss_zero_at_truth():
    s = _spd(3, np.random.default_rng(0))
    assert loss("stein", s, s) < 1e-10
    assert loss("quadratic", s, s) < 1e-10


def test_scalar_losses():
    assert loss("stein", [[2.0]], [[1.0]]) == pytest.approx(2 - math.log(2) - 1, abs=1e-14)
    assert loss("quadratic", [[2.0]], [[1.0]]) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_congruence_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = _spd(3, rng), _spd(3, rng)
    m = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    for kind in LossKind:
        assert loss(kind, m @ a @ m.T, m @ b @ m.T) == pytest.approx(loss(kind, a, b), rel=1e-8, abs=1e-10)


def test_losses_positive_when_unequal():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a, b = _spd(3, rng), _spd(3, rng)
        assert loss("stein", a, b) > 0
        assert loss("quadratic", a, b) > 0


def test_loss_batched_and_errors():
    rng = np.random.default_rng(2)
    a, b = _spd(3, rng), _spd(3, rng)
    batch = loss("stein", np.stack([a, b]), b)
    assert batch[1] < 1e-10
    assert batch[0] == pytest.approx(loss("stein", a, b))
    with pytest.raises(NotPositiveDefiniteError):
        loss("stein", a, -np.eye(3))


def test_elog_chi2_closed_forms():
    assert elog_chi2(2) == pytest.approx(-np.euler_gamma + math.log(2), abs=1e-12)
    assert elog_chi2(4) == pytest.approx(1 - np.euler_gamma + math.log(2), abs=1e-12)


@pytest.mark.parametrize("k", [1, 3, 7, 30])
def test_elog_chi2_against_quadrature(k):
    # oracle: integrate log(x) against the chi-square density at high precision
    mpmath.mp.dps = 30
    kk = mpmath.mpf(k)
    dens = lambda x: x ** (kk / 2 - 1) * mpmath.exp(-x / 2) / (2 ** (kk / 2) * mpmath.gamma(kk / 2))  # noqa: E731
    ref = mpmath.quad(lambda x: mpmath.log(x) * dens(x), [0, 1, kk, 10 * kk + 100, mpmath.inf])
    assert elog_chi2(k) == pytest.approx(float(ref), abs=1e-12)


def test_elog_chi2_mc():
    x = sample_chi2(10, RandomStream(3), size=1_000_000)
    lx = np.log(x)
    assert abs(lx.mean() - elog_chi2(10)) <= 5 * lx.std() / 1000


def test_published_risk_examples():
    block = risk_table_block(3, 1, 10)
    assert block.risk("stein", "u").value == pytest.approx(0.6765, abs=0.005)
    q = block.risk("quadratic", "ma2")
    assert q.value == pytest.approx(0.6591, abs=5e-4)
    assert q.rrr_vs_u == pytest.approx(45.07, abs=0.1)
    assert block.risk("stein", "sds").rrr_vs_u == pytest.approx(15.85, abs=0.1)
    b51 = risk_table_block(4, 2, 51)
    s = b51.risk("stein", "ma1")
    assert s.value == pytest.approx(0.1377, abs=0.005)
    assert s.rrr_vs_u == pytest.approx(31.73, abs=0.1)
    assert risk_table_block(4, 1, 5).risk("quadratic", "ma2").rrr_vs_u == pytest.approx(63.36, abs=0.1)


def test_rrr_rules():
    r = RiskReport(LossKind.STEIN, EstimatorKind.U, 2.0, "analytic_asymptotic", context=(3, 1, 10))
    assert rrr(r, r) == 0
    other = RiskReport(LossKind.QUADRATIC, EstimatorKind.U, 2.0, "analytic_asymptotic", context=(3, 1, 10))
    with pytest.raises(ValueError):
        rrr(r, other)


def test_analytic_stderr_zero_for_exact_and_positive_for_mc():
    exact = asymptotic_risk_identity_blocks("quadratic", coeffs_u(4, 6), moment_table(4, 1, 5))
    assert exact.stderr == 0
    t = moment_table(4, 1, 6, RandomStream(0), reps=50_000)
    mc = asymptotic_risk_identity_blocks("quadratic", coeffs_u(4, 6), t)
    assert mc.stderr > 0


def test_finite_mc_p1_closed_form():
    # p = 1: risk of S/n under Stein loss is 1 + log n - E log chi2_n - 1
    n = 7
    spec1 = EigenSpec(BlockPartition((0, 1)), (1.0,), (1.0,))
    rep = risk_mc_finite("stein", custom([1 / n]), spec1, None, n, reps=200_000, stream=RandomStream(4))
    closed = 1 + math.log(n) - elog_chi2(n) - 1
    assert abs(rep.value - closed) <= 5 * rep.stderr


@pytest.mark.parametrize("key", [(3, 1, 10), (4, 2, 9)])
def test_finite_mc_near_limit_matches_analytic(key):
    p, m, n = key
    coeffs = list(all_coefficients(p, m, n).values())
    res = risk_mc_finite_many(coeffs, EigenSpec.two_block(p, m, 1e-6), n, reps=100_000, stream=RandomStream(8))
    block = risk_table_block(p, m, n)
    for (lk, kind), rep in res.items():
        assert abs(rep.value - block.risk(lk, kind).value) <= 5 * rep.stderr


def test_finite_mc_invariant_to_gamma():
    p, m, n = 3, 1, 10
    c = coeffs_ma2(p, m, n)
    spec = EigenSpec.two_block(p, m, 0.2)
    g = random_orthogonal(p, np.random.default_rng(5))
    a = risk_mc_finite("quadratic", c, spec, None, n, reps=100_000, stream=RandomStream(1))
    b = risk_mc_finite("quadratic", c, spec, g, n, reps=100_000, stream=RandomStream(2))
    assert abs(a.value - b.value) <= 5 * math.hypot(a.stderr, b.stderr)


@pytest.mark.parametrize("lk", list(LossKind))
def test_limitdist_identity_matches_analytic(lk):
    c = coeffs_ma2(3, 1, 10)
    dec = asymptotic_risk_limitdist_mc(lk, c, 3, 1, 10, reps=100_000, stream=RandomStream(6))
    assert dec.total == dec.r1d + dec.r2d + dec.r3d
    analytic = asymptotic_risk_identity_blocks(lk, c, moment_table(3, 1, 10)).value
    assert abs(dec.total - analytic) <= 5 * dec.stderr


def test_r31_exact():
    dec = asymptotic_risk_limitdist_mc("stein", coeffs_u(4, 5), 4, 1, 5, reps=1_000, stream=RandomStream(0))
    assert dec.r3d == pytest.approx(0.6, abs=1e-15)


@pytest.mark.parametrize("lk", list(LossKind))
def test_decomposition_against_single_pass(lk):
    c = coeffs_ma2(4, 2, 11)
    xi1, xi2 = (2.0, 0.5), (3.0, 1.0)
    dec = asymptotic_risk_limitdist_mc(lk, c, 4, 2, 11, xi1, xi2, reps=100_000, stream=RandomStream(3))
    mean, se = limit_risk_single_pass(lk, c, 4, 2, 11, xi1, xi2, reps=100_000, stream=RandomStream(4))
    assert abs(dec.total - mean) <= 5 * math.hypot(dec.stderr, se)


def test_finite_beta_bridge():
    c = coeffs_ma2(3, 1, 10)
    dec = asymptotic_risk_limitdist_mc("quadratic", c, 3, 1, 10, reps=100_000, stream=RandomStream(10))
    fin = risk_mc_finite("quadratic", c, EigenSpec.two_block(3, 1, 1e-4), None, 10, reps=100_000,
                         stream=RandomStream(11))
    assert abs(dec.total - fin.value) <= 5 * math.hypot(dec.stderr, fin.stderr)


def test_optimality_small():
    rng = np.random.default_rng(0)
    block = risk_table_block(4, 1, 9)
    s_min = block.risk("stein", "ma1").value
    q_min = block.risk("quadratic", "ma2").value
    for kind in EstimatorKind:
        if kind is EstimatorKind.CUSTOM:
            continue
        assert block.risk("stein", kind).value >= s_min - 1e-12
        assert block.risk("quadratic", kind).value >= q_min - 1e-12
    for _ in range(100):
        c = custom(rng.uniform(0.01, 0.3, 4))
        assert asymptotic_risk_identity_blocks("stein", c, block.moments).value >= s_min
        assert asymptotic_risk_identity_blocks("quadratic", c, block.moments).value >= q_min
