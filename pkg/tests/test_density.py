import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from haarblocks.core import BlockDims, DimensionError, DomainError, OutOfSupportError
from haarblocks.density import (
    TailQuery,
    log_block_density,
    log_density_ratio,
    log_gamma_ratio,
    log_gaussian_density,
    log_multigamma,
    log_multigamma_ratio,
    log_scaled_density,
    marginal_tail,
)

# high-precision reference values (40-digit arithmetic)
LOG_GAMMA_RATIOS = [
    (1e10, 0.5, 11.51292546495772842),
    (1e6, 2.5, 34.538778269909435261),
    (35.5, 1.0, 3.5695326964813701119),
    (5e4, 0.5, 5.409886642205141597),
]
LOG_TAILS = [
    (10, 0.5, -2.8361097088530741),
    (100, 0.3, -6.7662705984641023),
    (1000, 0.1, -7.171907142865178),
    (3, 0.5, -1.3862943611198906),
    (4, 0.7, -2.3638202529130729),
    (1000, 0.5, -147.37958910641734),
]
# -(beta^2/N) log P(N^{1/4} a_11 > 1)
MDP_ENTRY_SLOPES = [
    (10**6, 0.50462347898051434),
    (10**7, 0.50164396471029409),
    (10**8, 0.50057741753471257),
    (10**10, 0.50006925407931969),
]


def test_multigamma_values():
    assert log_multigamma(1, 0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-14)
    assert log_multigamma(2, 2.0) == pytest.approx(math.log(math.pi / 2), abs=1e-14)
    with pytest.raises(DomainError):
        log_multigamma(3, 1.0)


@pytest.mark.parametrize("x,h,expected", LOG_GAMMA_RATIOS)
def test_log_gamma_ratio_reference(x, h, expected):
    assert log_gamma_ratio(x, h) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.6, 200.0), st.floats(0.0, 10.0))
def test_log_gamma_ratio_matches_gammaln_in_moderate_range(x, h):
    assert log_gamma_ratio(x, h) == pytest.approx(gammaln(x + h) - gammaln(x), abs=1e-11, rel=1e-12)


def test_multigamma_ratio_consistent_with_multigamma():
    for m, N, k in [(1, 7, 2), (2, 9, 3), (3, 20, 4)]:
        direct = log_multigamma(m, N / 2) - log_multigamma(m, (N - k) / 2)
        assert log_multigamma_ratio(m, N, k) == pytest.approx(direct, abs=1e-12)


def test_uniform_density_on_interval():
    v = log_block_density([[0.0]], BlockDims(3, 1, 1))
    assert v.in_support and v.log_value == pytest.approx(math.log(0.5), abs=1e-15)


def test_block_density_reference_values():
    assert log_block_density([[0.3, 0.4]], BlockDims(10, 1, 2)).log_value == pytest.approx(
        -0.62148174208485233763, abs=1e-13
    )
    assert log_block_density(np.diag([0.5, 0.2]), BlockDims(7, 2, 2)).log_value == pytest.approx(
        -1.0085259262367360307, abs=1e-13
    )


def test_outside_support_is_minus_inf():
    v = log_block_density([[0.8, 0.6]], BlockDims(10, 1, 2))
    assert not v.in_support and v.log_value == -math.inf
    assert log_scaled_density([[4.0]], BlockDims(16, 1, 1)).log_value == -math.inf
    with pytest.raises(OutOfSupportError) as info:
        log_density_ratio([[5.0]], BlockDims(16, 1, 1))
    assert info.value.op_norm == pytest.approx(25.0)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        log_block_density(np.zeros((2, 2)), BlockDims(10, 1, 2))


@pytest.mark.parametrize("N", [3, 4, 10, 100])
def test_entry_density_normalized(N):
    dims = BlockDims(N, 1, 1)
    val, _ = integrate.quad(lambda x: math.exp(log_block_density([[x]], dims).log_value), -1, 1, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("N,k", [(5, 2), (8, 3), (12, 4)])
def test_row_density_normalized(N, k):
    """m = 1: the density is radial, so integrate against the sphere area."""
    dims = BlockDims(N, 1, k)
    area = 2 * math.pi ** (k / 2) / math.gamma(k / 2)

    def radial(r):
        A = np.zeros((1, k))
        A[0, 0] = r
        return area * r ** (k - 1) * math.exp(log_block_density(A, dims).log_value)

    val, _ = integrate.quad(radial, 0, 1, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-9)


@given(
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(0, 200),
    st.floats(0.0, 3.0),
    st.integers(0, 1000),
)
def test_ratio_equals_difference_of_log_densities(m, k, extra, radius, seed):
    N = m + k + 2 + extra
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((m, k))
    B *= radius / max(np.linalg.norm(B), 1e-300)
    dims = BlockDims(N, m, k)
    g = log_scaled_density(B, dims)
    if not g.in_support:
        return
    diff = g.log_value - log_gaussian_density(B)
    assert log_density_ratio(B, dims) == pytest.approx(diff, abs=1e-10)


def test_ratio_vanishes_in_the_limit():
    B = np.array([[0.5, -1.0], [0.3, 0.2]])
    values = [abs(log_density_ratio(B, BlockDims(N, 2, 2))) for N in (10**3, 10**5, 10**7)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-5


def test_scaled_density_is_change_of_variables():
    dims = BlockDims(50, 2, 3)
    B = np.arange(6.0).reshape(2, 3) / 10
    unscaled = log_block_density(B / math.sqrt(50), dims).log_value
    assert log_scaled_density(B, dims).log_value == pytest.approx(unscaled - 3 * math.log(50), abs=1e-12)


@pytest.mark.parametrize("N,x,expected", LOG_TAILS)
def test_marginal_tail_reference(N, x, expected):
    assert marginal_tail(TailQuery(x), N) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("N,expected", MDP_ENTRY_SLOPES)
def test_marginal_tail_at_large_N(N, expected):
    L = marginal_tail(TailQuery(1.0, "betaN", 0.25), N)
    assert -(N**0.5 / N) * L == pytest.approx(expected, rel=1e-9)


def test_marginal_tail_edge_cases():
    assert marginal_tail(TailQuery(0.0), 50) == pytest.approx(-math.log(2))
    assert marginal_tail(TailQuery(1.0), 50) == -math.inf
    assert marginal_tail(TailQuery(-1.5), 50) == 0.0
    # sqrtN scaling at threshold sqrt(N) sits at the support edge
    assert marginal_tail(TailQuery(10.0, "sqrtN"), 100) == -math.inf
    with pytest.raises(DomainError):
        marginal_tail(TailQuery(0.1), 2)
    with pytest.raises(ValueError):
        TailQuery(1.0, "betaN", 0.7)


@given(st.integers(3, 5000), st.floats(0.0, 0.99))
def test_marginal_tail_symmetry(N, x):
    up = math.exp(marginal_tail(TailQuery(x), N))
    down = math.exp(marginal_tail(TailQuery(-x), N))
    assert up + down == pytest.approx(1.0, abs=1e-11)


@given(st.integers(3, 10**6), st.floats(0.0, 0.98), st.floats(0.001, 0.01))
def test_marginal_tail_decreasing(N, x, dx):
    assert marginal_tail(TailQuery(x + dx), N) <= marginal_tail(TailQuery(x), N) + 1e-12
