"""Linear conjugate gradient on the local quadratic model.

CG minimises φ(x) = −xᵀb + ½xᵀBx, whose minimiser solves Bx = b. The
model value after every iteration is recorded; on an SPD system it never
increases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, Mapping

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ngseq.errors import CGAbort, ConfigurationError, UsageError

logger = logging.getLogger(__name__)


class CGInit(StrEnum):
    ZERO = "zero"
    GRADIENT = "gradient"
    BLENDED = "blended"


@dataclass(frozen=True)
class CGConfig:
    max_iters: int = 5
    residual_tol: float = 1e-10
    init: CGInit = CGInit.GRADIENT

    def __post_init__(self) -> None:
        object.__setattr__(self, "init", CGInit(self.init))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError(f"cg max_iters must be a positive integer, got {self.max_iters}")
        if not self.residual_tol > 0:
            raise ConfigurationError(f"cg residual_tol must be positive, got {self.residual_tol}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], **defaults: Any) -> "CGConfig":
        known = {"max_iters", "residual_tol", "init"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown [cg] keys: {sorted(unknown)}")
        try:
            init = CGInit(data.get("init", defaults.get("init", CGInit.GRADIENT)))
        except ValueError:
            raise ConfigurationError(f"unknown cg init {data.get('init')!r}") from None
        return cls(
            max_iters=int(data.get("max_iters", defaults.get("max_iters", 5))),
            residual_tol=float(data.get("residual_tol", defaults.get("residual_tol", 1e-10))),
            init=init,
        )


@dataclass(frozen=True)
class CGResult:
    delta: np.ndarray
    model_values: tuple[float, ...]
    residual_norm: float
    iterations: int
    products: int
    converged: bool

    @property
    def model_value(self) -> float:
        return self.model_values[-1]


def _apply(op: LinearOperator | np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.asarray(op @ v, dtype=np.float64).ravel()


def quadratic_model(op: LinearOperator | np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    """φ(x) = −xᵀb + ½xᵀBx."""
    return float(-np.dot(x, b) + 0.5 * np.dot(x, _apply(op, x)))


def cg_solve(
    op: LinearOperator | np.ndarray,
    b: np.ndarray,
    cfg: CGConfig,
    *,
    direction: np.ndarray | None = None,
) -> CGResult:
    """Approximately solve Bx = b.

    With a gradient or blended init, iteration 0 starts at the exact line
    search minimiser along the init direction d: x₀ = (dᵀb / dᵀBd)·d, where d
    is *direction* when given and b otherwise.

    Raises `CGAbort` when a search direction has pᵀBp ≤ 0.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    if not np.all(np.isfinite(b)):
        raise UsageError("CG right-hand side has non-finite entries")
    if tuple(getattr(op, "shape", (b.size, b.size))) != (b.size, b.size):
        raise UsageError(f"operator shape {op.shape} does not match vector length {b.size}")

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CGResult(np.zeros_like(b), (0.0,), 0.0, 0, 0, True)

    products = 0
    x = np.zeros_like(b)
    r = b.copy()
    if cfg.init is not CGInit.ZERO:
        d = b if direction is None else np.asarray(direction, dtype=np.float64)
        bd = _apply(op, d)
        products += 1
        curvature = float(np.dot(d, bd))
        if curvature <= 0.0:
            raise CGAbort(curvature, 0)
        alpha = float(np.dot(d, b)) / curvature
        x = alpha * d
        r = b - alpha * bd

    # φ(x) = −½xᵀ(b + r) because Bx = b − r
    values = [float(-0.5 * np.dot(x, b + r))]
    tol = cfg.residual_tol * b_norm
    r_sq = float(np.dot(r, r))
    p = r.copy()
    iterations = 0
    while iterations < cfg.max_iters and np.sqrt(r_sq) > tol:
        bp = _apply(op, p)
        products += 1
        curvature = float(np.dot(p, bp))
        if curvature <= 0.0:
            raise CGAbort(curvature, iterations + 1)
        alpha = r_sq / curvature
        x = x + alpha * p
        r = r - alpha * bp
        iterations += 1
        new_r_sq = float(np.dot(r, r))
        values.append(float(-0.5 * np.dot(x, b + r)))
        logger.debug("cg iter %d: φ=%.6e |r|=%.3e", iterations, values[-1], np.sqrt(new_r_sq))
        p = r + (new_r_sq / r_sq) * p
        r_sq = new_r_sq

    residual = float(np.sqrt(r_sq))
    return CGResult(
        delta=x,
        model_values=tuple(values),
        residual_norm=residual,
        iterations=iterations,
        products=products,
        converged=residual <= tol,
    )
