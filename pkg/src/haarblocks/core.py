"""Shared value types, seeding and small symmetric linear algebra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HaarBlocksError",
    "DimensionError",
    "DomainError",
    "OutOfSupportError",
    "SpectrumError",
    "BlockDims",
    "Seed",
    "SpectralSummary",
    "as_block",
    "gram_spectrum",
    "frobenius_sq",
    "derive_replica_seed",
    "make_rng",
]

# relative threshold below which negative Gram eigenvalues are treated as round-off
CLAMP_RTOL = 1e-10


class HaarBlocksError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HaarBlocksError, ValueError):
    pass


class DomainError(HaarBlocksError, ValueError):
    pass


class OutOfSupportError(HaarBlocksError, ValueError):
    """A block lies outside the support ``||B B^T||_op < N``."""

    def __init__(self, message: str, op_norm: float):
        super().__init__(message)
        self.op_norm = op_norm


class SpectrumError(HaarBlocksError, ArithmeticError):
    pass


@dataclass(frozen=True)
class BlockDims:
    """Ambient dimension ``N`` and block shape ``m x k`` with ``N >= m + k``."""

    N: int
    m: int
    k: int

    def __post_init__(self):
        for name in ("N", "m", "k"):
            value = getattr(self, name)
            if int(value) != value:
                raise DimensionError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.m < 1 or self.k < 1:
            raise DimensionError(f"block shape must be at least 1x1, got {self.m}x{self.k}")
        if self.N < self.m + self.k:
            raise DimensionError(
                f"N={self.N} must satisfy N >= m + k = {self.m + self.k}"
            )

    @property
    def p(self) -> int:
        return self.m * self.k


@dataclass(frozen=True)
class Seed:
    """Root of a reproducible random stream.

    Identical ``(value, stream)`` pairs produce identical samples.
    """

    value: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.value) < 2**64:
            raise ValueError(f"seed value must be a 64-bit unsigned integer, got {self.value}")
        if int(self.stream) < 0:
            raise ValueError(f"seed stream must be non-negative, got {self.stream}")
        object.__setattr__(self, "value", int(self.value))
        object.__setattr__(self, "stream", int(self.stream))


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray  # non-increasing, clamped at zero
    trace: float
    trace_of_square: float
    op_norm: float

    def power_trace(self, r: int) -> float:
        return float(np.sum(self.eigenvalues**r))


def as_block(B, name: str = "B") -> np.ndarray:
    """Validate ``B`` as a finite 2-D float array (row-major copy)."""
    arr = np.array(B, dtype=np.float64, order="C")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _clamp(eig: np.ndarray) -> np.ndarray:
    """Sort eigenvalues descending and zero out round-off negatives."""
    eig = np.sort(eig, axis=-1)[..., ::-1]
    top = np.maximum(eig[..., :1], 0.0)
    tol = CLAMP_RTOL * top
    bad = eig < -tol
    if np.any(bad):
        raise SpectrumError(
            f"Gram matrix has eigenvalue {eig[bad].min():.3e} below -{CLAMP_RTOL:g} * lambda_1"
        )
    return np.where(eig < 0.0, 0.0, eig)


def gram_eigenvalues(B: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``B @ B.T`` for one block or a stack ``(..., m, k)``."""
    gram = B @ np.swapaxes(B, -1, -2)
    try:
        eig = np.linalg.eigvalsh(gram)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        cond = np.linalg.cond(gram)
        raise SpectrumError(f"eigensolver did not converge (condition number {cond:.3e})") from exc
    return _clamp(eig)


def gram_spectrum(B) -> SpectralSummary:
    """Spectral summary of the ``m x m`` Gram matrix ``B B^T``."""
    B = as_block(B)
    eig = gram_eigenvalues(B)
    return SpectralSummary(
        eigenvalues=eig,
        trace=float(eig.sum()),
        trace_of_square=float(np.sum(eig**2)),
        op_norm=float(eig[0]),
    )


def frobenius_sq(B) -> float:
    B = as_block(B)
    return float(np.sum(B * B))


def derive_replica_seed(root: Seed, replica: int) -> Seed:
    """Counter-based child seed for ``replica``.

    The child depends only on ``(root, replica)``, so replicas can be
    generated in any order or in parallel.
    """
    if int(replica) < 0:
        raise ValueError(f"replica index must be non-negative, got {replica}")
    ss = np.random.SeedSequence(root.value, spawn_key=(root.stream, int(replica)))
    value = int(ss.generate_state(1, dtype=np.uint64)[0])
    return Seed(value, 0)


def make_rng(seed: Seed) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed.value, spawn_key=(seed.stream,)))
    )
