"""Kernel functions, parallel Gram/cross matrices, and a bandwidth-keyed cache."""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset
from .errors import DataError

FAMILIES = ("gaussian_rbf", "laplacian")

# Rows per work unit. Fixed independently of the worker count so that the
# exact same BLAS calls happen regardless of threading (bitwise determinism).
_BLOCK_ROWS = 256


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth gamma (length-scale convention: the
    Gaussian exponent is -||x-u||^2 / gamma^2, the Laplacian -||x-u|| / gamma)."""

    family: str
    gamma: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    spec: KernelSpec
    row_token: str = ""
    col_token: str = ""

    @property
    def shape(self):
        return self.values.shape


def libsvm_g_to_gamma(g: float) -> float:
    """Convert a libsvm-convention coefficient exp(-g||x-u||^2) to a bandwidth."""
    return float(g) ** -0.5


def kernel_eval(spec: KernelSpec, x, u) -> float:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if x.shape != u.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {u.shape}")
    diff = x - u
    d2 = max(float(diff @ diff), 0.0)
    if spec.family == "gaussian_rbf":
        return float(np.exp(-d2 / (spec.gamma * spec.gamma)))
    return float(np.exp(-np.sqrt(d2) / spec.gamma))


def _apply_kernel(spec: KernelSpec, d2: np.ndarray) -> np.ndarray:
    np.maximum(d2, 0.0, out=d2)
    if spec.family == "gaussian_rbf":
        d2 /= spec.gamma * spec.gamma
        np.negative(d2, out=d2)
        return np.exp(d2, out=d2)
    np.sqrt(d2, out=d2)
    d2 /= -spec.gamma
    return np.exp(d2, out=d2)


def _block_rows(out, spec, X, U, x_sq, u_sq, start, stop):
    d2 = x_sq[start:stop, None] + u_sq[None, :] - 2.0 * (X[start:stop] @ U.T)
    out[start:stop] = _apply_kernel(spec, d2)


def _pairwise(spec: KernelSpec, X: np.ndarray, U: np.ndarray, workers: int) -> np.ndarray:
    x_sq = np.einsum("ij,ij->i", X, X)
    u_sq = x_sq if U is X else np.einsum("ij,ij->i", U, U)
    out = np.empty((X.shape[0], U.shape[0]))
    blocks = [(s, min(s + _BLOCK_ROWS, X.shape[0])) for s in range(0, X.shape[0], _BLOCK_ROWS)]
    if workers <= 1 or len(blocks) == 1:
        for s, e in blocks:
            _block_rows(out, spec, X, U, x_sq, u_sq, s, e)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_block_rows, out, spec, X, U, x_sq, u_sq, s, e) for s, e in blocks]
            for f in futs:
                f.result()
    return out


def gram_matrix(spec: KernelSpec, data: Dataset, workers: int = 1) -> KernelMatrix:
    """Self kernel matrix. Symmetric, unit diagonal, identical for any worker count."""
    values = _pairwise(spec, data.samples, data.samples, workers)
    np.fill_diagonal(values, 1.0)
    values.flags.writeable = False
    return KernelMatrix(values=values, spec=spec, row_token=data.token, col_token=data.token)


def cross_matrix(spec: KernelSpec, rows: Dataset, cols: Dataset, workers: int = 1) -> KernelMatrix:
    if rows.dim != cols.dim:
        raise DataError(f"dimension mismatch: {rows.dim} vs {cols.dim}")
    values = _pairwise(spec, rows.samples, cols.samples, workers)
    values.flags.writeable = False
    return KernelMatrix(values=values, spec=spec, row_token=rows.token, col_token=cols.token)


class KernelCache:
    """LRU cache of Gram matrices keyed by (family, gamma, dataset token).

    Meant to be driven from a single coordinator thread; no internal locking.
    """

    def __init__(self, capacity: int = 4):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._store: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.computations = 0

    def get(self, spec: KernelSpec, data: Dataset, workers: int = 1) -> KernelMatrix:
        key = (spec.family, spec.gamma, data.token)
        if key in self._store:
            self.hits += 1
            self._store.move_to_end(key)
            return self._store[key]
        self.misses += 1
        self.computations += 1
        mat = gram_matrix(spec, data, workers=workers)
        self._store[key] = mat
        if len(self._store) > self.capacity:
            self._store.popitem(last=False)
        return mat
