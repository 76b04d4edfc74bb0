"""Matrix-free curvature operators and curvature-batch sampling."""

from __future__ import annotations

import copy
import math
from enum import StrEnum
from typing import Sequence, TypeVar

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ngseq.errors import ConfigurationError, UsageError

T = TypeVar("T")


class CurvatureKind(StrEnum):
    GAUSS_NEWTON = "gauss_newton"
    EMPIRICAL_FISHER = "empirical_fisher"
    EXPLICIT = "explicit"


class HessianMode(StrEnum):
    """How the per-frame loss Hessian enters the Gauss-Newton product."""

    SYMMETRIZED = "symmetrized"
    UNSYMMETRIZED = "unsymmetrized"
    IDENTITY = "identity"
    PSD = "psd"


class FisherKappa(StrEnum):
    """Acoustic scale used for the per-utterance Fisher gradients."""

    CRITERION = "criterion"
    UNSCALED = "unscaled"


class CurvatureOperator(LinearOperator):
    """Symmetric map v ↦ Bv + λv over the flat parameter space.

    Subclasses implement `curvature_product` (the undamped part); damping is
    added here. Being a `LinearOperator`, instances support `op @ v` and
    `op.matvec(v)` as well as `apply`.
    """

    def __init__(self, kind: CurvatureKind | str, dim: int, damping: float = 0.0) -> None:
        if dim < 1:
            raise UsageError(f"operator dimension must be positive, got {dim}")
        if not damping >= 0.0:
            raise UsageError(f"damping must be non-negative, got {damping}")
        super().__init__(dtype=np.dtype(np.float64), shape=(dim, dim))
        self.kind = CurvatureKind(kind)
        self.damping = float(damping)

    @property
    def dim(self) -> int:
        return self.shape[0]

    def curvature_product(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.shape[0] != self.dim:
            raise UsageError(f"vector has length {v.shape[0]}, operator expects {self.dim}")
        out = self.curvature_product(v)
        if self.damping:
            out = out + self.damping * v
        return out

    def quadratic_form(self, v: np.ndarray) -> float:
        return float(np.dot(v, self.apply(v)))

    def with_damping(self, damping: float) -> "CurvatureOperator":
        if not damping >= 0.0:
            raise UsageError(f"damping must be non-negative, got {damping}")
        clone = copy.copy(self)
        clone.damping = float(damping)
        return clone

    def _matvec(self, v: np.ndarray) -> np.ndarray:
        return self.apply(np.ravel(v))

    def _rmatvec(self, v: np.ndarray) -> np.ndarray:
        return self._matvec(v)


def curvature_sample_size(pool_size: int, fraction: float, minimum: int) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"curvature fraction must be in (0, 1], got {fraction}")
    if minimum < 1:
        raise ConfigurationError(f"curvature minimum must be positive, got {minimum}")
    return min(pool_size, max(minimum, math.ceil(fraction * pool_size)))


def sample_curvature_batch(
    pool: Sequence[T], fraction: float, minimum: int, rng: np.random.Generator
) -> list[T]:
    """Uniform sample without replacement, returned in pool order."""
    if not pool:
        raise UsageError("cannot sample a curvature batch from an empty pool")
    n = curvature_sample_size(len(pool), fraction, minimum)
    picked = np.sort(rng.choice(len(pool), size=n, replace=False))
    return [pool[int(i)] for i in picked]


class DenseOperator(CurvatureOperator):
    """An explicit matrix, for tiny problems and oracle comparisons."""

    def __init__(self, matrix: np.ndarray, *, damping: float = 0.0, check_symmetric: bool = True) -> None:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise UsageError(f"dense operator needs a square matrix, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise UsageError("dense operator has non-finite entries")
        if check_symmetric:
            tol = 1e-10 * max(1.0, float(np.abs(matrix).max()))
            if np.abs(matrix - matrix.T).max() > tol:
                raise UsageError("dense operator is not symmetric")
        super().__init__(CurvatureKind.EXPLICIT, matrix.shape[0], damping)
        self.matrix = matrix

    def curvature_product(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def damped_matrix(self) -> np.ndarray:
        return self.matrix + self.damping * np.eye(self.dim)
