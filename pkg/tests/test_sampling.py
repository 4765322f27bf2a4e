import numpy as np
import pytest

from blockcov import montecarlo
from blockcov.errors import InsufficientDofError, NotPositiveDefiniteError
from blockcov.sampling import RandomStream, bartlett_factor, sample_chi2, sample_gaussian_matrix, sample_wishart, split_stream


def test_stream_reproducible():
    a = RandomStream(5).generator().standard_normal(4)
    b = RandomStream(5).generator().standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_split_streams_differ():
    root = RandomStream(5)
    a = split_stream(root, 0).generator().standard_normal(4)
    b = split_stream(root, 1).generator().standard_normal(4)
    assert not np.allclose(a, b)
    assert split_stream(root, 3).stream_id == (3,)


def test_stream_validation():
    with pytest.raises(ValueError):
        RandomStream(-1)
    with pytest.raises(ValueError):
        split_stream(RandomStream(0), -1)


def test_bartlett_shape():
    t = bartlett_factor(6, 3, np.random.default_rng(0), 10)
    assert t.shape == (10, 3, 3)
    assert np.all(np.triu(t, 1) == 0)
    assert np.all(np.diagonal(t, axis1=1, axis2=2) > 0)


def test_wishart_mean_and_variance():
    # E[S] = n Sigma, Var(S_ij) = n (sigma_ij^2 + sigma_ii sigma_jj)
    sigma = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.5]])
    n, reps = 7, 200_000
    s = sample_wishart(n, sigma, RandomStream(11), size=reps)
    mean = s.mean(axis=0)
    var = n * (sigma ** 2 + np.outer(np.diag(sigma), np.diag(sigma)))
    se = np.sqrt(var / reps)
    assert np.all(np.abs(mean - n * sigma) <= 5 * se)
    emp_var = s.var(axis=0)
    assert np.all(np.abs(emp_var - var) <= 0.05 * var)


def test_wishart_single_draw_is_symmetric_pd():
    s = sample_wishart(4, np.eye(4), RandomStream(1))
    assert s.shape == (4, 4)
    np.testing.assert_array_equal(s, s.T)
    assert np.linalg.eigvalsh(s)[0] > 0


def test_wishart_errors():
    with pytest.raises(InsufficientDofError):
        sample_wishart(2, np.eye(3), RandomStream(0))
    with pytest.raises(NotPositiveDefiniteError):
        sample_wishart(5, -np.eye(3), RandomStream(0))


def test_gaussian_and_chi2():
    z = sample_gaussian_matrix(2, 3, RandomStream(2), size=50_000)
    assert z.shape == (50_000, 2, 3)
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    x = sample_chi2(4, RandomStream(3), size=100_000)
    assert abs(x.mean() - 4) < 5 * np.sqrt(8 / 100_000)
    with pytest.raises(ValueError):
        sample_chi2(0, RandomStream(0))


def _stat(rng, count):
    x = rng.standard_normal((count, 2))
    return np.column_stack([x[:, 0], x[:, 0] * x[:, 1]])


def test_run_independent_of_threads():
    a = montecarlo.run(_stat, 50_001, RandomStream(9), threads=1, chunk_size=7_000)
    b = montecarlo.run(_stat, 50_001, RandomStream(9), threads=4, chunk_size=7_000)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.m2, b.m2)
    assert a.count == 50_001


def test_summary_merge_matches_direct():
    x = np.random.default_rng(0).standard_normal((1000, 3))
    merged = montecarlo.Summary.of(x[:300]).merge(montecarlo.Summary.of(x[300:]))
    direct = montecarlo.Summary.of(x)
    np.testing.assert_allclose(merged.mean, direct.mean, rtol=1e-13)
    np.testing.assert_allclose(merged.m2, direct.m2, rtol=1e-12)
    np.testing.assert_allclose(direct.cov, np.cov(x.T), rtol=1e-12)


def test_chunk_counts():
    assert montecarlo.chunk_counts(45, 20) == [20, 20, 5]
    assert montecarlo.chunk_counts(40, 20) == [20, 20]
    with pytest.raises(ValueError):
        montecarlo.chunk_counts(0)
