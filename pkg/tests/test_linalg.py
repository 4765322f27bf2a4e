import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcov.errors import DegenerateSpectrumWarning, DimensionMismatchError, NotPositiveDefiniteError
from blockcov.linalg import (
    BlockPartition,
    EigenSpec,
    as_symmetric,
    block_view,
    build_sigma,
    check_orthogonal,
    eigh_descending,
    random_orthogonal,
    relative_rotation,
    spectral_decompose,
)


def _spd(p, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((p + 3, p))
    return x.T @ x + 0.1 * np.eye(p)


def test_as_symmetric_exact():
    a = np.array([[2.0, 1.0 + 1e-14], [1.0, 3.0]])
    s = as_symmetric(a)
    assert s[0, 1] == s[1, 0]


def test_as_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        as_symmetric([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        as_symmetric(np.ones((2, 3)))


def test_spectral_decompose_diagonal():
    dec = spectral_decompose(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(dec.values, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(dec.vectors), np.eye(3)[:, [1, 2, 0]])


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_reconstruction_and_orthogonality(p, seed):
    s = _spd(p, seed)
    dec = spectral_decompose(s)
    np.testing.assert_allclose(dec.reconstruct(), s, atol=1e-10 * np.abs(s).max())
    np.testing.assert_allclose(dec.vectors.T @ dec.vectors, np.eye(p), atol=1e-12)
    assert np.all(np.diff(dec.values) <= 0)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 5), seed=st.integers(0, 10_000))
def test_frame_sign_convention(p, seed):
    s = _spd(p, seed)
    gamma = random_orthogonal(p, np.random.default_rng(seed + 1))
    dec = spectral_decompose(s, gamma)
    assert np.all(np.diag(gamma.T @ dec.vectors) > 0)


def test_default_sign_largest_entry_positive():
    dec = spectral_decompose(_spd(4, 3))
    idx = np.argmax(np.abs(dec.vectors), axis=0)
    assert np.all(dec.vectors[idx, np.arange(4)] > 0)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        spectral_decompose(np.diag([1.0, 0.0]))
    with pytest.raises(NotPositiveDefiniteError):
        spectral_decompose(np.diag([1.0, -1.0]))


def test_degenerate_warning():
    with pytest.warns(DegenerateSpectrumWarning):
        dec = spectral_decompose(np.eye(3))
    assert dec.degenerate


def test_no_warning_for_distinct_spectrum():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        spectral_decompose(np.diag([3.0, 2.0, 1.0]))


def test_batched_eigh_matches_single():
    mats = np.stack([_spd(3, s) for s in range(5)])
    w, v = eigh_descending(mats)
    for k in range(5):
        dec = spectral_decompose(mats[k])
        np.testing.assert_allclose(w[k], dec.values)
        np.testing.assert_allclose(v[k], dec.vectors, atol=1e-12)


def test_relative_rotation():
    g = random_orthogonal(3, np.random.default_rng(0))
    np.testing.assert_allclose(relative_rotation(g, g), np.eye(3), atol=1e-12)


def test_check_orthogonal():
    with pytest.raises(ValueError):
        check_orthogonal(2 * np.eye(2))


def test_partition():
    part = BlockPartition.two_block(4, 1)
    assert part.sizes == (1, 3)
    assert part.k == 2
    assert part.block_slice(1) == slice(1, 4)
    np.testing.assert_array_equal(part.block_of(), [0, 1, 1, 1])
    assert BlockPartition.from_sizes([1, 2, 1]).cut_points == (0, 1, 3, 4)
    with pytest.raises(ValueError):
        BlockPartition((0, 2, 2))
    with pytest.raises(ValueError):
        BlockPartition.two_block(3, 3)


def test_block_view_copies():
    a = np.arange(16.0).reshape(4, 4)
    part = BlockPartition((0, 1, 4))
    b = block_view(a, part, 1, 0)
    assert b.shape == (3, 1)
    b[:] = -1
    assert a[1, 0] == 4.0


def test_eigenspec_two_block():
    spec = EigenSpec.two_block(3, 1, 1e-3)
    np.testing.assert_allclose(spec.eigenvalues(), [1.0, 1e-3, 1e-3])
    np.testing.assert_allclose(build_sigma(spec), np.diag([1.0, 1e-3, 1e-3]))


def test_eigenspec_rejects_increasing():
    with pytest.raises(ValueError):
        EigenSpec(BlockPartition((0, 1, 2)), (1.0, 1.0), (1.0, 2.0))
    with pytest.raises(ValueError):
        EigenSpec(BlockPartition((0, 1, 2)), (1.0, 2.0), (1.0, 0.9))


def test_build_sigma_with_gamma():
    spec = EigenSpec.two_block(3, 1, 0.5, xi=(2.0, 1.5, 1.0))
    g = random_orthogonal(3, np.random.default_rng(4))
    sigma = build_sigma(spec, g)
    np.testing.assert_allclose(np.linalg.eigvalsh(sigma)[::-1], spec.eigenvalues(), rtol=1e-12)
