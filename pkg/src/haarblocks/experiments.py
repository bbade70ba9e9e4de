"""Scheduled Monte Carlo and quadrature experiments.

Each experiment walks a schedule of ambient dimensions ``N`` and emits one
:class:`ReportRow` per ``N``.  Monte Carlo replicas are drawn in fixed-size
chunks; chunk ``c`` of the row for ``N`` uses the seed
``derive_replica_seed(derive_replica_seed(root, N), c)``.  Chunk results are
folded by chunk index, so the report does not depend on the thread count or
on scheduling order.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from . import _kernels
from .core import BlockDims, DomainError, Seed, derive_replica_seed, make_rng
from .density import TailQuery, marginal_tail
from .sampling import sample_blocks

__all__ = [
    "SCHEMA_VERSION",
    "MIN_HITS",
    "TestFunction",
    "Schedule",
    "ReportRow",
    "ExperimentReport",
    "gauss_hermite_log_mgf",
    "run_logmgf",
    "run_empirical_decay",
    "run_as_trace",
    "run_mdp_entry",
    "run_mdp_block",
    "run_concentration",
    "EXPERIMENTS",
]

SCHEMA_VERSION = 1
# rows with fewer hits are marked low-confidence
MIN_HITS = 100
# upper bound on Gaussian draws held in memory per chunk
_CHUNK_BUDGET = 2_000_000


@dataclass(frozen=True)
class TestFunction:
    """Bounded continuous test function with ``sup |f| <= a``."""

    __test__ = False  # not a pytest class

    kind: str
    a: float
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("scaled_tanh", "scaled_sin", "clamped_quadratic"):
            raise DomainError(f"unknown test function kind {self.kind!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.c)) or self.a < 0:
            raise DomainError(f"need finite a >= 0, got a={self.a}, c={self.c}")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "scaled_tanh":
            return self.a * np.tanh(x)
        if self.kind == "scaled_sin":
            return self.a * np.sin(x)
        return np.clip(self.c * x * x, -self.a, self.a)

    @property
    def is_zero(self) -> bool:
        return self.a == 0.0 or (self.kind == "clamped_quadratic" and self.c == 0.0)

    @classmethod
    def parse(cls, text: str) -> "TestFunction":
        """``tanh:0.5``, ``sin:1`` or ``quad:0.5,2`` (``a,c``)."""
        name, _, args = text.partition(":")
        kinds = {"tanh": "scaled_tanh", "sin": "scaled_sin", "quad": "clamped_quadratic"}
        if name not in kinds or not args:
            raise DomainError(f"cannot parse test function {text!r}; expected tanh:a, sin:a or quad:a,c")
        values = [float(v) for v in args.split(",")]
        return cls(kinds[name], *values)


@dataclass(frozen=True)
class Schedule:
    N_values: tuple[int, ...]
    replicas: int = 1000
    root_seed: Seed = field(default_factory=lambda: Seed(0))
    alpha: float | None = None
    b: float | None = None

    def __post_init__(self):
        Ns = tuple(int(n) for n in self.N_values)
        if not Ns:
            raise DomainError("schedule needs at least one N")
        if any(n2 <= n1 for n1, n2 in zip(Ns, Ns[1:])):
            raise DomainError(f"N values must be strictly increasing, got {Ns}")
        if Ns[0] < 2:
            raise DomainError(f"N values must be >= 2, got {Ns}")
        if self.replicas < 1:
            raise DomainError(f"replicas must be >= 1, got {self.replicas}")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.b is not None and not 0.0 < self.b < 0.5:
            raise DomainError(f"b must lie in (0, 1/2), got {self.b}")
        object.__setattr__(self, "N_values", Ns)
        if self.alpha is not None:
            for N in Ns:
                self.block_dims(N)

    def block_dims(self, N: int) -> BlockDims:
        """Most-square ``m x k`` factorization of ``p_N = round(N^alpha)``."""
        if self.alpha is None:
            raise DomainError("schedule has no alpha; block shape is undefined")
        p = max(1, round(N**self.alpha))
        target = max(1, round(math.sqrt(p)))
        divisors = [d for d in range(1, p + 1) if p % d == 0]
        m = min(divisors, key=lambda d: (abs(d - target), d))
        return BlockDims(N, m, p // m)

    def beta(self, N: int) -> float:
        if self.b is None:
            raise DomainError("schedule has no beta exponent b")
        return float(N) ** self.b

    def as_dict(self) -> dict:
        return {
            "N_values": list(self.N_values),
            "replicas": self.replicas,
            "root_seed": {"value": self.root_seed.value, "stream": self.root_seed.stream},
            "alpha": self.alpha,
            "b": self.b,
        }


@dataclass
class ReportRow:
    N: int
    speed: float
    estimate: float | None
    reference: float | None
    abs_error: float | None
    mc_stderr: float | None
    status: str = "ok"
    m: int | None = None
    k: int | None = None
    p_N: int | None = None
    beta_N: float | None = None
    hits: int | None = None
    replicas: int | None = None
    significant: bool | None = None


ROW_FIELDS = tuple(ReportRow.__dataclass_fields__)


@dataclass
class ExperimentReport:
    name: str
    schedule: Schedule
    rows: list[ReportRow]
    parameters: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0  # not serialized: reports must be byte-reproducible

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.name,
            "schedule": self.schedule.as_dict(),
            "parameters": dict(self.parameters),
            "summary": dict(self.summary),
            "backend": "numba" if _kernels.USE_NUMBA else "numpy",
            "rows": [asdict(r) for r in self.rows],
        }

    def row(self, N: int) -> ReportRow:
        for r in self.rows:
            if r.N == N:
                return r
        raise KeyError(N)


# --------------------------------------------------------------------------
# replica engine
# --------------------------------------------------------------------------


def _chunk_size(dims: BlockDims) -> int:
    return max(1, _CHUNK_BUDGET // (min(dims.m, dims.k) * dims.N))


def _map_replicas(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    row_seed: Seed,
    replicas: int,
    chunk: int,
    threads: int | None,
) -> np.ndarray:
    """Run ``fn(rng, n)`` over deterministic chunks and concatenate in chunk order."""
    sizes = [min(chunk, replicas - start) for start in range(0, replicas, chunk)]

    def task(c: int) -> np.ndarray:
        return fn(make_rng(derive_replica_seed(row_seed, c)), sizes[c])

    workers = max(1, min(threads or os.cpu_count() or 1, len(sizes)))
    if workers == 1:
        parts = [task(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(task, range(len(sizes))))
    return np.concatenate(parts)


def _row_seed(s: Schedule, N: int) -> Seed:
    return derive_replica_seed(s.root_seed, N)


def _proportion_row(N, hits, M, scale, reference, dims=None, beta=None, speed=1.0) -> ReportRow:
    """Row for ``estimate = -scale * log(hits / M)`` with delta-method error."""
    row = ReportRow(
        N=N,
        speed=speed,
        estimate=None,
        reference=reference,
        abs_error=None,
        mc_stderr=None,
        m=dims.m if dims else None,
        k=dims.k if dims else None,
        p_N=dims.p if dims else None,
        beta_N=beta,
        hits=int(hits),
        replicas=M,
    )
    if hits == 0:
        row.status = "censored"
        return row
    p_hat = hits / M
    row.estimate = -scale * math.log(p_hat) + 0.0
    row.mc_stderr = scale * math.sqrt((1.0 - p_hat) / (M * p_hat))
    if reference is not None:
        row.abs_error = abs(row.estimate - reference)
        row.significant = row.abs_error > 2.0 * row.mc_stderr
    if hits < MIN_HITS:
        row.status = "low_confidence"
    return row


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        report = fn(*args, **kwargs)
        report.wall_time = time.perf_counter() - t0
        return report

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def gauss_hermite_log_mgf(f: TestFunction, n_nodes: int = 200) -> float:
    """``log E[exp(f(g))]`` for standard normal ``g`` by Gauss-Hermite quadrature."""
    x, w = hermegauss(n_nodes)
    keep = w > 0
    logw = np.log(w[keep])
    return float(logsumexp(logw + f(x[keep])) - logsumexp(logw))


@_timed
def run_logmgf(f: TestFunction, s: Schedule, threads: int | None = None) -> ExperimentReport:
    """Normalized log-MGF of ``sum_ij f(y_ij)`` against its Gaussian limit."""
    if s.alpha is None:
        raise DomainError("logmgf needs a schedule with alpha")
    reference = gauss_hermite_log_mgf(f)
    M = s.replicas
    rows = []
    for N in s.N_values:
        dims = s.block_dims(N)
        p = dims.p
        if f.is_zero:
            estimate, stderr = 0.0, 0.0
        else:
            sums = _map_replicas(
                lambda rng, n: f(sample_blocks(dims, n, rng)).sum(axis=(1, 2)),
                _row_seed(s, N),
                M,
                _chunk_size(dims),
                threads,
            )
            estimate = float((logsumexp(sums) - math.log(M)) / p)
            w = np.exp(sums - sums.max())
            stderr = float(np.std(w, ddof=1) / (math.sqrt(M) * w.mean()) / p) if M > 1 else math.inf
        err = abs(estimate - reference)
        rows.append(
            ReportRow(
                N=N,
                speed=float(p),
                estimate=estimate,
                reference=reference,
                abs_error=err,
                mc_stderr=stderr,
                m=dims.m,
                k=dims.k,
                p_N=p,
                replicas=M,
                significant=err > 2.0 * stderr,
            )
        )
    params = {"test_function": {"kind": f.kind, "a": f.a, "c": f.c}, "quadrature_nodes": 200}
    return ExperimentReport("logmgf", s, rows, params)


def _levy_of_blocks(blocks: np.ndarray) -> np.ndarray:
    flat = np.sort(blocks.reshape(blocks.shape[0], -1), axis=1)
    return _kernels.levy_distances(flat)


@_timed
def run_empirical_decay(epsilon: float, s: Schedule, threads: int | None = None) -> ExperimentReport:
    """Decay slope ``-log P(d_Levy(nu_N, gamma) > eps) / p_N``."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if s.alpha is None:
        raise DomainError("ldp-decay needs a schedule with alpha")
    M = s.replicas
    rows = []
    for N in s.N_values:
        dims = s.block_dims(N)
        dist = _map_replicas(
            lambda rng, n: _levy_of_blocks(sample_blocks(dims, n, rng)),
            _row_seed(s, N),
            M,
            _chunk_size(dims),
            threads,
        )
        hits = int(np.count_nonzero(dist > epsilon))
        rows.append(_proportion_row(N, hits, M, 1.0 / dims.p, None, dims, speed=float(dims.p)))
    return ExperimentReport("ldp-decay", s, rows, {"epsilon": epsilon})


@_timed
def run_as_trace(s: Schedule, threads: int | None = None) -> ExperimentReport:
    """One trajectory of ``d_Levy(nu_N, gamma)`` along the schedule."""
    if s.alpha is None:
        raise DomainError("as-trace needs a schedule with alpha")
    rows = []
    for N in s.N_values:
        dims = s.block_dims(N)
        rng = make_rng(_row_seed(s, N))
        d = float(_levy_of_blocks(sample_blocks(dims, 1, rng))[0])
        rows.append(
            ReportRow(
                N=N,
                speed=float(dims.p),
                estimate=d,
                reference=None,
                abs_error=None,
                mc_stderr=0.0,
                m=dims.m,
                k=dims.k,
                p_N=dims.p,
                replicas=1,
            )
        )
    return ExperimentReport("as-trace", s, rows)


@_timed
def run_mdp_entry(t: float, s: Schedule, threads: int | None = None) -> ExperimentReport:
    """Exact one-sided entry tail slope ``-(beta_N^2 / N) log P(beta_N a_11 > t)``."""
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    if s.b is None:
        raise DomainError("mdp-entry needs a schedule with b")
    reference = 0.5 * t * t
    rows = []
    for N in s.N_values:
        beta = s.beta(N)
        scale = beta * beta / N
        log_tail = marginal_tail(TailQuery(t, "betaN", s.b), N)
        row = ReportRow(
            N=N,
            speed=1.0 / scale,
            estimate=None,
            reference=reference,
            abs_error=None,
            mc_stderr=0.0,
            beta_N=beta,
            m=1,
            k=1,
            p_N=1,
        )
        if math.isinf(log_tail):
            row.status = "out_of_support"
        else:
            row.estimate = -scale * log_tail
            row.abs_error = abs(row.estimate - reference)
        rows.append(row)
    return ExperimentReport("mdp-entry", s, rows, {"t": t})


@_timed
def run_mdp_block(t: float, m: int, k: int, s: Schedule, threads: int | None = None) -> ExperimentReport:
    """Monte Carlo slope of ``P(||beta_N Z_N||_F > t)`` at speed ``N / beta_N^2``."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if s.b is None:
        raise DomainError("mdp-block needs a schedule with b")
    reference = 0.5 * t * t
    M = s.replicas
    rows = []
    for N in s.N_values:
        dims = BlockDims(N, m, k)
        beta = s.beta(N)
        norms = _map_replicas(
            lambda rng, n: beta * np.sqrt(np.sum(sample_blocks(dims, n, rng, scaled=False) ** 2, axis=(1, 2))),
            _row_seed(s, N),
            M,
            _chunk_size(dims),
            threads,
        )
        hits = int(np.count_nonzero(norms > t))
        rows.append(_proportion_row(N, hits, M, beta * beta / N, reference, dims, beta, speed=N / (beta * beta)))
    return ExperimentReport("mdp-block", s, rows, {"t": t, "m": m, "k": k})


def exceed_fraction(norms: np.ndarray, R: float) -> float:
    return float(np.count_nonzero(np.asarray(norms) > R)) / max(1, np.size(norms))


@_timed
def run_concentration(
    s: Schedule,
    R_exponent: float,
    m: int | None = None,
    k: int | None = None,
    threads: int | None = None,
) -> ExperimentReport:
    """Tail of ``||sqrt(N) Z_N||_F`` beyond ``R_N = N^r`` and the fitted constant ``c``.

    Each uncensored row gives ``c_N = -log(p_hat) / R_N^2``; the fitted ``c``
    is their minimum, the largest constant with ``p_hat <= exp(-c R_N^2)``
    on every row.
    """
    if not 0.0 < R_exponent < 0.5:
        raise DomainError(f"R_exponent must lie in (0, 1/2), got {R_exponent}")
    if (m is None) != (k is None):
        raise DomainError("give both m and k or neither")
    M = s.replicas
    rows = []
    for N in s.N_values:
        dims = BlockDims(N, m, k) if m is not None else s.block_dims(N)
        R = float(N) ** R_exponent
        norms = _map_replicas(
            lambda rng, n: np.sqrt(np.sum(sample_blocks(dims, n, rng) ** 2, axis=(1, 2))),
            _row_seed(s, N),
            M,
            _chunk_size(dims),
            threads,
        )
        hits = int(np.count_nonzero(norms > R))
        row = _proportion_row(N, hits, M, 1.0 / (R * R), None, dims, speed=R * R)
        rows.append(row)
    fitted = [r.estimate for r in rows if r.estimate is not None]
    c = min(fitted) if fitted else None
    summary = {
        "fitted_c": c,
        "violation": c is not None and c <= 0.0,
        "uncensored_rows": len(fitted),
    }
    params = {"R_exponent": R_exponent, "m": m, "k": k}
    return ExperimentReport("concentration", s, rows, params, summary)


EXPERIMENTS = {
    "logmgf": run_logmgf,
    "ldp-decay": run_empirical_decay,
    "as-trace": run_as_trace,
    "mdp-entry": run_mdp_entry,
    "mdp-block": run_mdp_block,
    "concentration": run_concentration,
}
