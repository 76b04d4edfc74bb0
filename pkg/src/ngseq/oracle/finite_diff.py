"""Central finite differences."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ngseq.errors import UsageError


def fd_gradient(objective: Callable[[np.ndarray], float], theta: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """(f(θ + εe_i) − f(θ − εe_i)) / 2ε for every coordinate i."""
    if not eps > 0:
        raise UsageError(f"finite-difference step must be positive, got {eps}")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = eps
        grad[i] = (objective(theta + step) - objective(theta - step)) / (2.0 * eps)
    return grad


def fd_hessian(objective: Callable[[np.ndarray], float], theta: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Dense Hessian from double central differences of the objective."""
    if not eps > 0:
        raise UsageError(f"finite-difference step must be positive, got {eps}")
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.size
    basis = np.eye(n) * eps
    hess = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ei, ej = basis[i], basis[j]
            value = (
                objective(theta + ei + ej)
                - objective(theta + ei - ej)
                - objective(theta - ei + ej)
                + objective(theta - ei - ej)
            ) / (4.0 * eps * eps)
            hess[i, j] = hess[j, i] = value
    return hess


def fd_directional(
    fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, v: np.ndarray, eps: float = 1e-4
) -> np.ndarray:
    """(f(θ + εv) − f(θ − εv)) / 2ε for an array-valued f."""
    if not eps > 0:
        raise UsageError(f"finite-difference step must be positive, got {eps}")
    return (np.asarray(fn(theta + eps * v)) - np.asarray(fn(theta - eps * v))) / (2.0 * eps)
