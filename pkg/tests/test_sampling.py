import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from haarblocks.core import BlockDims, DimensionError, Seed, make_rng
from haarblocks.sampling import (
    empirical_sample,
    sample_blocks,
    sample_gaussian_block,
    sample_haar_orthogonal,
    sample_stiefel,
    scaled_block,
)


def test_stiefel_frame_is_orthonormal():
    V = sample_stiefel(3, 50, Seed(1))
    assert V.entries.shape == (3, 50)
    assert V.orthonormality_error() < 1e-12


def test_stiefel_rejects_tall_frames():
    with pytest.raises(DimensionError):
        sample_stiefel(5, 3, Seed(0))


def test_orthogonal_matrix():
    Q = sample_haar_orthogonal(20, Seed(2)).entries
    np.testing.assert_allclose(Q @ Q.T, np.eye(20), atol=1e-12)
    np.testing.assert_allclose(Q.T @ Q, np.eye(20), atol=1e-12)


def test_haar_determinant_signs_balanced():
    dets = [np.linalg.det(sample_haar_orthogonal(4, Seed(s)).entries) for s in range(400)]
    np.testing.assert_allclose(np.abs(dets), 1.0, atol=1e-12)
    plus = sum(d > 0 for d in dets)
    assert 160 < plus < 240


def test_gaussian_block_reproducible():
    np.testing.assert_array_equal(sample_gaussian_block(2, 3, Seed(4)), sample_gaussian_block(2, 3, Seed(4)))


def test_scaled_block_and_validation():
    V = sample_stiefel(2, 10, Seed(0))
    B = scaled_block(V, 2, 3)
    np.testing.assert_allclose(B, np.sqrt(10) * V.entries[:2, :3])
    with pytest.raises(DimensionError):
        scaled_block(V, 3, 2)


def test_same_seed_same_blocks():
    dims = BlockDims(30, 2, 3)
    a = sample_blocks(dims, 5, make_rng(Seed(9)))
    b = sample_blocks(dims, 5, make_rng(Seed(9)))
    np.testing.assert_array_equal(a, b)


def test_first_entry_matches_exact_marginal():
    """sqrt(N) a_11 against the exact entry law: a_11^2 ~ Beta(1/2, (N-1)/2)."""
    N = 20
    x = sample_blocks(BlockDims(N, 1, 1), 20000, make_rng(Seed(3))).ravel() / np.sqrt(N)
    beta = stats.beta(0.5, (N - 1) / 2)
    assert stats.kstest(x * x, beta.cdf).pvalue > 0.01
    assert abs(np.mean(x > 0) - 0.5) < 0.02


def test_transposed_shapes_share_law():
    """An m x k block and a k x m block have transposed laws (singular values agree)."""
    N = 12
    a = sample_blocks(BlockDims(N, 3, 1), 5000, make_rng(Seed(1)))
    b = sample_blocks(BlockDims(N, 1, 3), 5000, make_rng(Seed(2)))
    assert a.shape == (5000, 3, 1) and b.shape == (5000, 1, 3)
    na = np.sum(a**2, axis=(1, 2))
    nb = np.sum(b**2, axis=(1, 2))
    assert stats.ks_2samp(na, nb).pvalue > 0.01


def test_scaled_block_second_moments():
    dims = BlockDims(40, 2, 2)
    B = sample_blocks(dims, 20000, make_rng(Seed(11)))
    # E[(sqrt(N) a_ij)^2] = 1 exactly
    np.testing.assert_allclose(np.mean(B**2, axis=0), 1.0, atol=0.05)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 6), st.integers(0, 2**32))
def test_block_support_and_row_norm_bound(m, k, extra, seed):
    N = m + k + extra
    B = sample_blocks(BlockDims(N, m, k), 3, make_rng(Seed(seed)))
    # rows of an orthonormal frame have unit norm, so ||B||_F^2 <= N min(m, k)
    assert np.all(np.sum(B**2, axis=(1, 2)) <= N * min(m, k) * (1 + 1e-12))
    eig = np.linalg.eigvalsh(B @ np.swapaxes(B, 1, 2))
    assert np.all(eig <= N * (1 + 1e-12))


def test_empirical_sample_sorted():
    s = empirical_sample([[3.0, -1.0], [0.5, 2.0]])
    assert s.values.tolist() == [-1.0, 0.5, 2.0, 3.0]
    assert len(s) == 4


def test_chunked_draws_match_single_draw(monkeypatch):
    from haarblocks import sampling

    dims = BlockDims(30, 2, 2)
    whole = sample_blocks(dims, 25, make_rng(Seed(2)))
    monkeypatch.setattr(sampling, "_DRAW_BUDGET", 130)
    np.testing.assert_array_equal(sample_blocks(dims, 25, make_rng(Seed(2))), whole)
