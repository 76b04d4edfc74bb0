"""Eigen-decomposition view of a second-order update on tiny problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from ngseq.errors import UsageError

MAX_DIAGNOSTIC_DIM = 200


@dataclass(frozen=True)
class EigenDiagnostic:
    """Δθ = Σ_i (1/μ_i)(v_iᵀ g) v_i with the spectrum it was built from.

    `projections[i]` is v_iᵀ g; a direction with a large eigenvalue moves by
    projections[i] / eigenvalues[i], i.e. more cautiously.
    """

    delta: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    projections: np.ndarray

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])


def eigen_diagnostic(matrix: np.ndarray, grad: np.ndarray) -> EigenDiagnostic:
    m = np.asarray(matrix, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64).ravel()
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != g.size:
        raise UsageError(f"matrix {m.shape} and gradient {g.shape} are incompatible")
    if m.shape[0] > MAX_DIAGNOSTIC_DIM:
        raise UsageError(f"eigen diagnostic is limited to {MAX_DIAGNOSTIC_DIM} dimensions")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(m).max()))):
        raise UsageError("eigen diagnostic needs a symmetric matrix")
    w, v = eigh(m)
    if w[0] <= 0.0:
        raise UsageError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})")
    proj = v.T @ g
    return EigenDiagnostic(delta=v @ (proj / w), eigenvalues=w, eigenvectors=v, projections=proj)
