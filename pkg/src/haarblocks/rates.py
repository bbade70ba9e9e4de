"""Rate functions of the deviation principles and a weak-topology distance.

Relative entropy is only evaluated on histograms (a discretized lower
bound) and in closed form on Gaussian inputs; on a raw empirical sample it
is always infinite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .core import DomainError, as_block, frobenius_sq, gram_eigenvalues
from .sampling import EmpiricalSample

__all__ = [
    "Histogram",
    "GaussianSpec",
    "kl_histogram",
    "kl_gaussian",
    "stiefel_ldp_rate",
    "orthogonal_ldp_rate",
    "mdp_rate",
    "levy_distance",
    "build_histogram",
]

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


@dataclass(frozen=True)
class Histogram:
    """Bins ``(-inf, e_0], (e_0, e_1], ..., (e_last, inf)`` with probability masses.

    ``masses`` has one more entry than ``edges``; the first and last bins are
    the unbounded tails.
    """

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64).ravel()
        masses = np.asarray(self.masses, dtype=np.float64).ravel()
        if edges.size < 1:
            raise DomainError("histogram needs at least one edge")
        if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise DomainError("histogram edges must be finite and strictly increasing")
        if masses.size != edges.size + 1:
            raise DomainError(f"expected {edges.size + 1} masses for {edges.size} edges, got {masses.size}")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise DomainError("histogram masses must be finite and non-negative")
        if abs(masses.sum() - 1.0) > 1e-12:
            raise DomainError(f"histogram masses sum to {masses.sum()!r}, not 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    def gaussian_masses(self) -> np.ndarray:
        cdf = ndtr(self.edges)
        upper = ndtr(-self.edges)
        q = np.empty(self.masses.size)
        q[0] = cdf[0]
        q[-1] = upper[-1]
        # use whichever tail is smaller for each interior bin
        mid = np.where(
            self.edges[1:] <= 0,
            cdf[1:] - cdf[:-1],
            upper[:-1] - upper[1:],
        )
        q[1:-1] = mid
        return q


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        m = mean.size
        if mean.ndim != 1 or cov.shape != (m, m):
            raise DomainError(f"mean of length {m} needs an {m}x{m} covariance, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise DomainError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -PSD_TOL * max(1.0, np.abs(cov).max()):
            raise DomainError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def second_moment(self) -> np.ndarray:
        return self.covariance + np.outer(self.mean, self.mean)


def kl_histogram(mu: Histogram) -> float:
    """Relative entropy of the histogram masses w.r.t. the Gaussian bin masses."""
    p = mu.masses
    q = mu.gaussian_masses()
    pos = p > 0
    if np.any(q[pos] <= 0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def kl_gaussian(spec: GaussianSpec) -> float:
    """``H(N(mean, cov) | N(0, I))`` in closed form; ``inf`` for singular ``cov``."""
    sign, logdet = np.linalg.slogdet(spec.covariance)
    if sign <= 0 or not np.isfinite(logdet):
        return math.inf
    return 0.5 * float(np.trace(spec.covariance) + spec.mean @ spec.mean - spec.dim - logdet)


def stiefel_ldp_rate(spec: GaussianSpec) -> float:
    """Column empirical-measure rate of a Stiefel frame, on Gaussian ``nu``.

    ``H(nu | gamma) + tr(I - C)/2`` when ``C - I`` is PSD (``C`` the second
    moment matrix), ``inf`` otherwise.  The value is returned as the formula
    gives it, even when negative.
    """
    C = spec.second_moment()
    if np.linalg.eigvalsh(C - np.eye(spec.dim)).min() < -PSD_TOL:
        return math.inf
    value = kl_gaussian(spec) + 0.5 * float(np.trace(np.eye(spec.dim) - C))
    if value < 0:
        log.warning("stiefel_ldp_rate evaluated to %.6g < 0 for %s", value, spec)
    return value


def orthogonal_ldp_rate(T) -> float:
    """``-1/2 log det(I - T T^T)``, or ``inf`` when ``||T T^T||_op >= 1``.

    Zero padding of ``T`` does not change the value.
    """
    T = as_block(T, "T")
    eig = gram_eigenvalues(T)
    if eig[0] >= 1.0:
        return math.inf
    return float(-0.5 * np.sum(np.log1p(-eig)))


def mdp_rate(A) -> float:
    return 0.5 * frobenius_sq(A)


def levy_distance(sample: EmpiricalSample | np.ndarray) -> float:
    """Levy distance between the empirical CDF of ``sample`` and the normal CDF."""
    values = sample.values if isinstance(sample, EmpiricalSample) else np.asarray(sample, dtype=np.float64)
    values = np.sort(np.ravel(values))
    if values.size == 0:
        raise DomainError("levy_distance needs a non-empty sample")
    if not np.all(np.isfinite(values)):
        raise DomainError("sample has non-finite values")
    return float(_kernels.levy_distances(values[None, :])[0])


def build_histogram(sample: EmpiricalSample | np.ndarray, L: float = 6.0, bins: int = 100) -> Histogram:
    """Equal-width bins on ``[-L, L]`` plus the two tails, with empirical frequencies."""
    if L <= 0 or bins < 2:
        raise DomainError(f"need L > 0 and bins >= 2, got L={L}, bins={bins}")
    values = sample.values if isinstance(sample, EmpiricalSample) else np.asarray(sample, dtype=np.float64)
    values = np.ravel(values)
    if values.size == 0:
        raise DomainError("cannot build a histogram from an empty sample")
    edges = np.linspace(-L, L, bins + 1)
    # bin j covers (edges[j-1], edges[j]]; bin 0 is (-inf, -L]
    idx = np.searchsorted(edges, values, side="left")
    counts = np.bincount(idx, minlength=bins + 2)
    return Histogram(edges, counts / values.size)
