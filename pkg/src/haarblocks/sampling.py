"""Haar sampling of orthogonal matrices, Stiefel frames and their blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import BlockDims, DimensionError, Seed, as_block, make_rng

__all__ = [
    "StiefelFrame",
    "EmpiricalSample",
    "sample_gaussian_block",
    "sample_stiefel",
    "sample_haar_orthogonal",
    "scaled_block",
    "empirical_sample",
    "sample_blocks",
]

# Gaussian draws generated per call when sampling many blocks
_DRAW_BUDGET = 4_000_000


@dataclass(frozen=True)
class StiefelFrame:
    """An ``m x N`` matrix with orthonormal rows."""

    entries: np.ndarray

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    def orthonormality_error(self) -> float:
        V = self.entries
        return float(np.max(np.abs(V @ V.T - np.eye(self.m))))


@dataclass(frozen=True)
class EmpiricalSample:
    """Sorted scaled entries; the uniform measure on them is ``nu_N``."""

    values: np.ndarray
    dims: BlockDims | None = None

    def __len__(self) -> int:
        return self.values.shape[0]


def sample_gaussian_block(m: int, k: int, seed: Seed) -> np.ndarray:
    if m < 1 or k < 1:
        raise DimensionError(f"block shape must be at least 1x1, got {m}x{k}")
    return make_rng(seed).standard_normal((m, k))


def _frames(m: int, N: int, ncols: int, n: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((n, m, N))
    return _kernels.row_frames(G, ncols)


def sample_stiefel(m: int, N: int, seed: Seed) -> StiefelFrame:
    """Haar-distributed ``m x N`` frame with orthonormal rows, cost ``O(N m^2)``."""
    if m < 1 or N < 1:
        raise DimensionError(f"need m, N >= 1, got m={m}, N={N}")
    if m > N:
        raise DimensionError(f"a frame needs m <= N, got m={m} > N={N}")
    return StiefelFrame(_frames(m, N, N, 1, make_rng(seed))[0])


def sample_haar_orthogonal(N: int, seed: Seed) -> StiefelFrame:
    return sample_stiefel(N, N, seed)


def scaled_block(V: StiefelFrame, m: int, k: int) -> np.ndarray:
    """``sqrt(N)`` times the upper-left ``m x k`` block of ``V``."""
    if m < 1 or k < 1:
        raise DimensionError(f"block shape must be at least 1x1, got {m}x{k}")
    if m > V.m or k > V.N:
        raise DimensionError(f"{m}x{k} block exceeds the {V.m}x{V.N} frame")
    return np.sqrt(V.N) * V.entries[:m, :k]


def empirical_sample(B, dims: BlockDims | None = None) -> EmpiricalSample:
    B = as_block(B)
    return EmpiricalSample(np.sort(B.ravel()), dims)


def sample_blocks(dims: BlockDims, n: int, rng: np.random.Generator, scaled: bool = True) -> np.ndarray:
    """``n`` independent upper-left ``m x k`` Haar blocks, shape ``(n, m, k)``.

    Only a ``min(m, k) x N`` frame is orthonormalized per replica; the
    block of the transpose of a Haar matrix has the same law.
    """
    m, k, N = dims.m, dims.k, dims.N
    r, c = min(m, k), max(m, k)
    # chunked draws consume the stream in the same order as one big draw
    step = max(1, _DRAW_BUDGET // (r * N))
    parts = [_frames(r, N, c, min(step, n - s), rng) for s in range(0, n, step)]
    blocks = np.concatenate(parts) if parts else np.empty((0, r, c))
    if m > k:
        blocks = np.ascontiguousarray(np.swapaxes(blocks, -1, -2))
    if scaled:
        blocks *= np.sqrt(N)
    return blocks
