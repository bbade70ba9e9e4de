"""Exact log-domain densities of Haar blocks and marginal tail probabilities.

The block density is

    f_N(A) = Gamma_m(N/2) / (pi^{mk/2} Gamma_m((N-k)/2))
             * det(I - A A^T)^{(N-k-m-1)/2}   on  ||A A^T||_op < 1,

and every quantity here is assembled in log space from two primitives: a
cancellation-free log-gamma ratio and the Gram spectrum of the block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, logsumexp

from .core import (
    BlockDims,
    DimensionError,
    DomainError,
    HaarBlocksError,
    OutOfSupportError,
    as_block,
    gram_eigenvalues,
)

__all__ = [
    "LogDensityValue",
    "TailQuery",
    "QuadratureError",
    "log_gamma_ratio",
    "log_multigamma",
    "log_multigamma_ratio",
    "log_det_gap",
    "log_block_density",
    "log_scaled_density",
    "log_gaussian_density",
    "log_density_ratio",
    "log_density_ratio_from_eigenvalues",
    "marginal_tail",
]

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)

# Stirling series coefficients B_2n / (2n (2n-1))
_STIRLING = (1.0 / 12, -1.0 / 360, 1.0 / 1260, -1.0 / 1680, 1.0 / 1188, -691.0 / 360360)


class QuadratureError(HaarBlocksError, ArithmeticError):
    pass


@dataclass(frozen=True)
class LogDensityValue:
    log_value: float
    in_support: bool

    @classmethod
    def outside(cls) -> "LogDensityValue":
        return cls(-math.inf, False)


@dataclass(frozen=True)
class TailQuery:
    """Threshold ``t`` for one entry, read in unscaled, ``sqrt(N)`` or ``N^b`` units."""

    t: float
    scaling: Literal["unscaled", "sqrtN", "betaN"] = "unscaled"
    b: float | None = None

    def __post_init__(self):
        if self.scaling not in ("unscaled", "sqrtN", "betaN"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.scaling == "betaN" and (self.b is None or not 0.0 < self.b < 0.5):
            raise ValueError(f"betaN scaling needs 0 < b < 1/2, got b={self.b}")

    def unscaled_threshold(self, N: float) -> float:
        if self.scaling == "sqrtN":
            return self.t / math.sqrt(N)
        if self.scaling == "betaN":
            return self.t / N**self.b
        return float(self.t)


def _stirling_tail(z):
    zi = 1.0 / z
    zi2 = zi * zi
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * zi2 + c
    return acc * zi


def log_gamma_ratio(x, h):
    """``log Gamma(x + h) - log Gamma(x)`` without cancellation for large ``x``.

    For ``x >= 30`` the difference is taken inside the Stirling series, so the
    result keeps full relative accuracy even when both log-gammas are ~1e10.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    big = (x >= 30.0) & (x + h >= 30.0)
    xb = np.where(big, x, 30.0)
    hb = np.where(big, h, 0.0)
    stirling = (
        (xb + hb - 0.5) * np.log1p(hb / xb)
        + hb * np.log(xb)
        - hb
        + _stirling_tail(xb + hb)
        - _stirling_tail(xb)
    )
    direct = gammaln(np.where(big, 1.0, x + h)) - gammaln(np.where(big, 1.0, x))
    out = np.where(big, stirling, direct)
    return float(out) if out.ndim == 0 else out


def log_multigamma(m: int, x: float) -> float:
    """``log Gamma_m(x) = m(m-1)/4 log(pi) + sum_i log Gamma(x - (i-1)/2)``."""
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if not x > (m - 1) / 2:
        raise DomainError(f"log_multigamma needs x > (m-1)/2 = {(m - 1) / 2}, got x={x}")
    shifts = x - 0.5 * np.arange(m)
    return float(m * (m - 1) / 4 * LOG_PI + np.sum(gammaln(shifts)))


def log_multigamma_ratio(m: int, N: int, k: int) -> float:
    """``log Gamma_m(N/2) - log Gamma_m((N-k)/2)`` summed as per-factor ratios."""
    if not (N - k) / 2 > (m - 1) / 2:
        raise DomainError(f"need N - k > m - 1, got N={N}, m={m}, k={k}")
    base = 0.5 * (N - k - np.arange(m))
    return float(np.sum(log_gamma_ratio(base, 0.5 * k)))


def _log1p_neg_plus(u):
    """``log(1 - u) + u`` accurate for small ``u`` (elementwise, ``u < 1``)."""
    u = np.asarray(u, dtype=np.float64)
    small = np.abs(u) < 0.1
    us = np.where(small, u, 0.0)
    series = np.zeros_like(us)
    term = us.copy()
    for r in range(2, 40):
        term = term * us
        series -= term / r
    direct = np.log1p(-np.where(small, 0.0, u)) + np.where(small, 0.0, u)
    return np.where(small, series, direct)


def _block_constant(dims: BlockDims) -> float:
    return log_multigamma_ratio(dims.m, dims.N, dims.k) - 0.5 * dims.p * LOG_PI


def _exponent(dims: BlockDims) -> float:
    return 0.5 * (dims.N - dims.k - dims.m - 1)


def _check_shape(B: np.ndarray, dims: BlockDims, name: str):
    if B.shape != (dims.m, dims.k):
        raise DimensionError(f"{name} has shape {B.shape}, expected {(dims.m, dims.k)}")


def log_det_gap(B, N: float) -> float:
    """``log det(I - B B^T / N)`` via the Gram spectrum of ``B``."""
    B = as_block(B)
    eig = gram_eigenvalues(B)
    if eig[0] >= N:
        raise OutOfSupportError(
            f"||B B^T||_op = {eig[0]:.6g} >= N = {N}; block is outside the support", float(eig[0])
        )
    return float(np.sum(np.log1p(-eig / N)))


def log_block_density(A, dims: BlockDims) -> LogDensityValue:
    """``log f_N(A)`` for the unscaled upper-left ``m x k`` block."""
    A = as_block(A, "A")
    _check_shape(A, dims, "A")
    eig = gram_eigenvalues(A)
    if eig[0] >= 1.0:
        return LogDensityValue.outside()
    value = _block_constant(dims) + _exponent(dims) * np.sum(np.log1p(-eig))
    return LogDensityValue(float(value), True)


def log_scaled_density(B, dims: BlockDims) -> LogDensityValue:
    """``log g_N(B)``, the density of ``sqrt(N)`` times the block."""
    B = as_block(B)
    _check_shape(B, dims, "B")
    eig = gram_eigenvalues(B)
    N = dims.N
    if eig[0] >= N:
        return LogDensityValue.outside()
    value = (
        _block_constant(dims)
        - 0.5 * dims.p * math.log(N)
        + _exponent(dims) * np.sum(np.log1p(-eig / N))
    )
    return LogDensityValue(float(value), True)


def log_gaussian_density(B) -> float:
    B = as_block(B)
    return float(-0.5 * B.size * LOG_2PI - 0.5 * np.sum(B * B))


def log_density_ratio_from_eigenvalues(eig: np.ndarray, dims: BlockDims):
    """``log(g_N / phi_N)`` from Gram eigenvalues, shape ``(..., m)``.

    Written as the gamma-quotient residual plus
    ``sum_i [C_N (log(1 - u_i) + u_i) + (k + m + 1) u_i / 2]`` with
    ``u_i = lambda_i / N``, so no large terms cancel.
    """
    N = dims.N
    u = np.asarray(eig, dtype=np.float64) / N
    residual = log_multigamma_ratio(dims.m, N, dims.k) - 0.5 * dims.p * math.log(0.5 * N)
    per_eig = _exponent(dims) * _log1p_neg_plus(u) + 0.5 * (dims.k + dims.m + 1) * u
    return residual + np.sum(per_eig, axis=-1)


def log_density_ratio(B, dims: BlockDims) -> float:
    B = as_block(B)
    _check_shape(B, dims, "B")
    eig = gram_eigenvalues(B)
    if eig[0] >= dims.N:
        raise OutOfSupportError(
            f"||B B^T||_op = {eig[0]:.6g} >= N = {dims.N}; g_N vanishes there", float(eig[0])
        )
    return float(log_density_ratio_from_eigenvalues(eig, dims))


# --------------------------------------------------------------------------
# marginal tails of a single entry (m = k = 1)
# --------------------------------------------------------------------------


def _log_entry_constant(N: float) -> float:
    return log_gamma_ratio(0.5 * (N - 1), 0.5) - 0.5 * LOG_PI


def _quad_piece(fn, lo, hi, trace, **kw):
    res = quad(fn, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1, **kw)
    trace.append((lo, hi, res[0], res[1]))
    if len(res) > 3:
        raise QuadratureError(f"quadrature did not converge on [{lo}, {hi}]: {res[3]}; trace={trace}")
    if not res[0] > 0.0:
        raise QuadratureError(f"non-positive quadrature value on [{lo}, {hi}]; trace={trace}")
    return res[0]


def _log_upper_integral(a: float, N: float) -> float:
    """``log int_a^1 (1 - x^2)^{(N-3)/2} dx`` for ``0 <= a < 1``."""
    e = 0.5 * (N - 3)
    trace: list = []
    if e == 0.0:
        return math.log1p(-a)
    if e < 2.0:
        # (1 - x)^e endpoint behaviour handled by an algebraic weight
        val = _quad_piece(lambda x: (1.0 + x) ** e, a, 1.0, trace, weight="alg", wvar=(0.0, e))
        return math.log(val)

    def h(x):
        return e * (math.log1p(-x) + math.log1p(x))

    slope = 2.0 * e * a / ((1.0 - a) * (1.0 + a))
    width = min(1.0 - a, 1.0 / (slope + math.sqrt(2.0 * e) + 1.0))
    h0 = h(a)
    logs = []
    x0 = a
    while x0 < 1.0:
        x1 = min(1.0, x0 + width)
        shift = h(x0)
        denom = (1.0 - x0) * (1.0 + x0)
        # h(x) - h(x0) written without subtracting two large logs
        val = _quad_piece(
            lambda x, x0=x0, denom=denom: math.exp(e * math.log1p(-(x - x0) * (x + x0) / denom)),
            x0,
            x1,
            trace,
        )
        logs.append(shift + math.log(val))
        if x1 >= 1.0 or h(x1) - h0 < -80.0:
            break
        x0 = x1
        width *= 2.0
    return float(logsumexp(logs))


def _log_tail_unscaled(a: float, N: float) -> float:
    if a >= 1.0:
        return -math.inf
    if a <= -1.0:
        return 0.0
    if a == 0.0:
        return -math.log(2.0)
    if a < 0.0:
        return math.log1p(-math.exp(_log_tail_unscaled(-a, N)))
    return _log_entry_constant(N) + _log_upper_integral(a, N)


def marginal_tail(q: TailQuery, N: float) -> float:
    """``log P(entry > t)`` for one entry of a Haar matrix in ``O(N)``.

    The threshold is mapped to unscaled coordinates first; thresholds at or
    beyond the support edge give ``-inf``.
    """
    if not N >= 3:
        raise DomainError(f"marginal_tail needs N >= 3, got N={N}")
    return _log_tail_unscaled(q.unscaled_threshold(N), float(N))
