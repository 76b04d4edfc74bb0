"""Explicit Jacobians and dense curvature matrices for tiny networks.

Jacobians are assembled frame by frame from layer sensitivity matrices and
loss statistics come from path enumeration, so these matrices do not reuse
`backward`, `rop` or forward-backward.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.special import softmax

from ngseq.curvature import DenseOperator, GaussNewtonOperator, HessianMode, prepare_curvature_batch
from ngseq.errors import DataError, NumericError, UsageError
from ngseq.file_io import atomic_write_text
from ngseq.lattice.criteria import CriterionKind
from ngseq.lattice.model import UtteranceExample
from ngseq.net.network import FrameBatch, Network, forward
from ngseq.oracle.enumeration import enumerate_paths, enumeration_statistics

MAX_ORACLE_PARAMS = 500
_AGREEMENT_TOL = 1e-10

__all__ = [
    "DenseOperator",
    "MAX_ORACLE_PARAMS",
    "explicit_fisher",
    "explicit_gn",
    "explicit_jacobian",
    "frame_loss_hessian",
    "outer_product_matrix",
    "probe_operator",
    "read_matrix",
    "write_matrix",
]


def _guard(net: Network) -> None:
    if net.num_params > MAX_ORACLE_PARAMS:
        raise UsageError(
            f"network has {net.num_params} parameters; dense oracles allow {MAX_ORACLE_PARAMS}"
        )


def explicit_jacobian(
    net: Network, theta: np.ndarray, frames: FrameBatch | np.ndarray
) -> np.ndarray:
    """∂a_t/∂θ for every frame, shape T × D_out × P."""
    _guard(net)
    record = forward(net, theta, frames)
    blocks = net.unpack(theta)
    slices = net.layer_slices()
    T, d_out = record.outputs.shape
    jac = np.zeros((T, d_out, net.num_params))
    for t in range(T):
        # sens = ∂a_t / ∂z_l, starting at the linear output layer
        sens = np.eye(d_out)
        for layer in range(net.num_transitions - 1, -1, -1):
            h = record.inputs[layer][t]
            w, _ = blocks[layer]
            fan_out, fan_in = w.shape
            sl = slices[layer]
            jac[t, :, sl.start : sl.start + fan_out * fan_in] = (
                sens[:, :, None] * h[None, None, :]
            ).reshape(d_out, fan_out * fan_in)
            jac[t, :, sl.start + fan_out * fan_in : sl.stop] = sens
            if layer > 0:
                sens = (sens @ w) * (h * (1.0 - h))[None, :]
    return jac


def probe_operator(op) -> np.ndarray:
    """Dense matrix of any linear operator, one basis vector per column."""
    n = op.shape[1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(op @ e, dtype=np.float64).ravel())
    return np.column_stack(cols)


def outer_product_matrix(grads: Sequence[np.ndarray]) -> np.ndarray:
    """(1/R) Σ_r g_r g_rᵀ."""
    if len(grads) == 0:
        raise UsageError("need at least one gradient")
    g = np.vstack([np.asarray(x, dtype=np.float64) for x in grads])
    return g.T @ g / g.shape[0]


def frame_loss_hessian(
    gamma: np.ndarray, gamma_hat: np.ndarray, mode: HessianMode | str
) -> np.ndarray:
    """Unscaled D × D loss Hessian of one frame, built entry by entry."""
    mode = HessianMode(mode)
    d = gamma.size
    if mode is HessianMode.IDENTITY:
        return np.eye(d)
    m = np.diag(gamma_hat) - np.outer(gamma_hat, gamma)
    if mode is HessianMode.UNSYMMETRIZED:
        return m
    m = 0.5 * (m + m.T)
    if mode is HessianMode.PSD:
        w, v = eigh(m)
        m = (v * np.clip(w, 0.0, None)) @ v.T
    return m


def _utterance_statistics(
    kind: CriterionKind, utt: UtteranceExample, activations: np.ndarray, kappa: float
) -> tuple[np.ndarray, np.ndarray]:
    if kind is CriterionKind.CE:
        p = softmax(activations, axis=1)
        return p, p
    lat = utt.lattice_for(kind.loss_level)
    stats = enumeration_statistics(
        enumerate_paths(lat, activations, kappa), lat.num_frames, activations.shape[1]
    )
    if kind is CriterionKind.MMI:
        return stats.gamma, stats.gamma
    if stats.gamma_hat is None:
        raise DataError(f"{utt.utterance_id}: lattice has no local losses")
    return stats.gamma, stats.gamma_hat


def explicit_gn(
    net: Network,
    theta: np.ndarray,
    batch: Sequence[UtteranceExample],
    kind: CriterionKind | str,
    kappa: float,
    *,
    mode: HessianMode | str = HessianMode.SYMMETRIZED,
    damping: float = 0.0,
    cross_check: bool = True,
) -> DenseOperator:
    """Σ_t J_tᵀ ∇²L_t J_t + λI assembled from explicit Jacobians.

    With `cross_check` the matrix is also built by probing the matrix-free
    Gauss-Newton operator column by column; the two must agree to 1e-10
    relative or `NumericError` is raised.
    """
    _guard(net)
    kind = CriterionKind(kind)
    mode = HessianMode(mode)
    if not batch:
        raise UsageError("explicit GN needs at least one utterance")
    if kind is CriterionKind.CE:
        scale = 1.0 / sum(u.num_frames for u in batch)
    else:
        scale = kappa**2 / len(batch)
    if mode is HessianMode.IDENTITY:
        scale = 1.0
    p = net.num_params
    gn = np.zeros((p, p))
    for utt in batch:
        outputs = forward(net, theta, utt.frames).outputs
        gamma, gamma_hat = _utterance_statistics(kind, utt, outputs, kappa)
        jac = explicit_jacobian(net, theta, utt.frames)
        for t in range(jac.shape[0]):
            h = scale * frame_loss_hessian(gamma[t], gamma_hat[t], mode)
            gn += jac[t].T @ h @ jac[t]
    symmetric = mode is not HessianMode.UNSYMMETRIZED
    if symmetric:
        gn = 0.5 * (gn + gn.T)

    if cross_check:
        cached = prepare_curvature_batch(net, theta, batch, kind, kappa)
        probed = probe_operator(GaussNewtonOperator(net, theta, cached, mode=mode))
        if symmetric:
            probed = 0.5 * (probed + probed.T)
        err = np.abs(probed - gn).max() / max(1.0, float(np.abs(gn).max()))
        if err > _AGREEMENT_TOL:
            raise NumericError(f"explicit and probed Gauss-Newton matrices differ by {err:.3e}")
    return DenseOperator(gn, damping=damping, check_symmetric=symmetric)


def explicit_fisher(
    net: Network,
    theta: np.ndarray,
    batch: Sequence[UtteranceExample],
    kappa: float,
    *,
    damping: float = 0.0,
) -> DenseOperator:
    """(1/R) Σ_r g_r g_rᵀ with g_r = Σ_t J_tᵀ κ(onehot(ref_t) − γ_t)."""
    _guard(net)
    if not batch:
        raise UsageError("explicit Fisher needs at least one utterance")
    grads = []
    for utt in batch:
        outputs = forward(net, theta, utt.frames).outputs
        gamma, _ = _utterance_statistics(CriterionKind.MMI, utt, outputs, kappa)
        target = np.zeros_like(gamma)
        target[np.arange(gamma.shape[0]), np.asarray(utt.reference.states)] = 1.0
        jac = explicit_jacobian(net, theta, utt.frames)
        grads.append(np.einsum("tdp,td->p", jac, kappa * (target - gamma)))
    return DenseOperator(outer_product_matrix(grads), damping=damping)


def write_matrix(path: Path, matrix: np.ndarray) -> None:
    """Dump a dense matrix: a `ngseq-matrix 1 <rows> <cols>` line, then one row per line."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    lines = [f"ngseq-matrix 1 {m.shape[0]} {m.shape[1]}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in m)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix(path: Path) -> np.ndarray:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read matrix {path}: {exc}") from None
    header = lines[0].split() if lines else []
    if len(header) != 4 or header[:2] != ["ngseq-matrix", "1"]:
        raise DataError(f"{path}: not an ngseq matrix file")
    rows, cols = int(header[2]), int(header[3])
    try:
        m = np.array([[float(x) for x in line.split()] for line in lines[1 : rows + 1]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if m.shape != (rows, cols):
        raise DataError(f"{path}: expected {rows}×{cols}, read {m.shape}")
    return m
