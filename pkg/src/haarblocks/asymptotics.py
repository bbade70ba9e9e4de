"""Evaluators and audits for the log-det expansion, the gamma quotient and
the uniform local limit of ``g_N / phi_N``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BlockDims, DomainError, HaarBlocksError, Seed, as_block, gram_eigenvalues, make_rng
from .density import _check_shape, log_density_ratio_from_eigenvalues, log_det_gap, log_multigamma_ratio

__all__ = [
    "ExpansionBreakdown",
    "BoundReport",
    "logdet_expansion",
    "remainder_bound",
    "gamma_quotient_residual",
    "local_limit_bound",
    "audit_local_limit",
    "probe_blocks",
]

BOUND_TERM_NAMES = ("R^4/N", "mk(m+k)/N", "(k+m)R^2/N")


@dataclass(frozen=True)
class ExpansionBreakdown:
    leading: float
    correction_frobenius: float
    correction_trace: float
    exact: float
    remainder: float

    def as_dict(self) -> dict:
        return {
            "leading": self.leading,
            "correction_frobenius": self.correction_frobenius,
            "correction_trace": self.correction_trace,
            "exact": self.exact,
            "remainder": self.remainder,
        }


@dataclass(frozen=True)
class BoundReport:
    observed: float
    bound_terms: dict[str, float]
    implied_constant: float | None = None
    constant: float = 1.0
    details: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return self.constant * sum(self.bound_terms.values())

    def as_dict(self) -> dict:
        return {
            "observed": self.observed,
            "bound_terms": dict(self.bound_terms),
            "constant": self.constant,
            "bound": self.bound,
            "implied_constant": self.implied_constant,
            **self.details,
        }


def logdet_expansion(B, dims: BlockDims) -> ExpansionBreakdown:
    """Split ``C_N log det(I - B B^T / N)`` into its three leading terms plus remainder.

    ``C_N = (N - k - m - 1) / 2``.  The remainder is ``exact`` minus the
    three displayed terms, so the decomposition is an identity.
    """
    B = as_block(B)
    _check_shape(B, dims, "B")
    N, m, k = dims.N, dims.m, dims.k
    eig = gram_eigenvalues(B)
    fro = float(eig.sum())
    tr2 = float(np.sum(eig**2))
    exact = 0.5 * (N - k - m - 1) * log_det_gap(B, N)
    leading = -0.5 * fro
    corr_fro = (k + m + 1) / (2.0 * N) * fro
    corr_tr = -tr2 / (4.0 * N)
    remainder = exact - (leading + corr_fro + corr_tr)
    return ExpansionBreakdown(leading, corr_fro, corr_tr, exact, remainder)


def remainder_bound(R: float, dims: BlockDims, C: float = 1.0) -> float:
    """``C ((k + m) R^4 + R^6) / N^2``."""
    if R < 0 or C <= 0:
        raise DomainError(f"need R >= 0 and C > 0, got R={R}, C={C}")
    N = dims.N
    return C * ((dims.k + dims.m) * R**4 + R**6) / N**2


def gamma_quotient_residual(dims: BlockDims) -> float:
    """``log Gamma_m(N/2) - log Gamma_m((N-k)/2) - (mk/2) log(N/2)``; of order ``mk(m+k)/N``."""
    if dims.N <= dims.m + dims.k:
        raise DomainError(f"gamma quotient needs N > m + k, got {dims}")
    return log_multigamma_ratio(dims.m, dims.N, dims.k) - 0.5 * dims.p * math.log(0.5 * dims.N)


def local_limit_bound(R: float, dims: BlockDims, C: float = 1.0) -> BoundReport:
    if R < 0 or C <= 0:
        raise DomainError(f"need R >= 0 and C > 0, got R={R}, C={C}")
    N, m, k = dims.N, dims.m, dims.k
    terms = dict(zip(BOUND_TERM_NAMES, (R**4 / N, m * k * (m + k) / N, (k + m) * R**2 / N)))
    return BoundReport(observed=0.0, bound_terms=terms, implied_constant=None, constant=C)


def probe_blocks(dims: BlockDims, R: float, n_probe: int, rng: np.random.Generator) -> np.ndarray:
    """Probe set for the sup of ``|log g_N / phi_N|`` over ``||B||_F <= R``.

    Random directions at radii R/4, R/2, 3R/4, R; rank-one, constant and
    single-entry blocks at radius R; and the zero block.
    """
    m, k = dims.m, dims.k
    radii = R * np.array([0.25, 0.5, 0.75, 1.0])
    dirs = rng.standard_normal((n_probe, m, k))
    dirs /= np.sqrt(np.sum(dirs**2, axis=(1, 2)))[:, None, None]
    random_part = (radii[:, None, None, None] * dirs[None]).reshape(-1, m, k)

    u = rng.standard_normal((n_probe, m))
    v = rng.standard_normal((n_probe, k))
    rank_one = u[:, :, None] * v[:, None, :]
    rank_one /= np.sqrt(np.sum(rank_one**2, axis=(1, 2)))[:, None, None]

    constant = np.full((1, m, k), 1.0 / math.sqrt(m * k))
    single = np.zeros((m * k, m, k))
    single.reshape(m * k, -1)[np.arange(m * k), np.arange(m * k)] = 1.0
    structured = R * np.concatenate([rank_one, constant, single])
    zero = np.zeros((1, m, k))
    return np.concatenate([random_part, structured, zero])


def audit_local_limit(dims: BlockDims, R: float, n_probe: int, seed: Seed) -> BoundReport:
    """Empirical sup of ``|log g_N / phi_N|`` on ``||B||_F <= R`` against the bound terms."""
    if not 0 <= R * R < dims.N:
        raise DomainError(f"audit needs 0 <= R^2 < N, got R={R}, N={dims.N}")
    if n_probe < 1:
        raise DomainError(f"n_probe must be >= 1, got {n_probe}")
    probes = probe_blocks(dims, R, n_probe, make_rng(seed))
    eig = gram_eigenvalues(probes)
    if np.any(eig[:, 0] >= dims.N):  # pragma: no cover - excluded by R^2 < N
        raise HaarBlocksError("probe left the support despite R^2 < N")
    values = np.abs(log_density_ratio_from_eigenvalues(eig, dims))
    worst = int(np.argmax(values))
    observed = float(values[worst])
    base = local_limit_bound(R, dims)
    total = sum(base.bound_terms.values())
    return BoundReport(
        observed=observed,
        bound_terms=base.bound_terms,
        implied_constant=observed / total if total > 0 else math.inf,
        details={
            "N": dims.N,
            "m": dims.m,
            "k": dims.k,
            "R": R,
            "n_probe": n_probe,
            "n_evaluated": int(values.size),
            "argmax_frobenius": float(math.sqrt(np.sum(probes[worst] ** 2))),
            "gamma_quotient_residual": gamma_quotient_residual(dims) if dims.N > dims.m + dims.k else None,
        },
    )
