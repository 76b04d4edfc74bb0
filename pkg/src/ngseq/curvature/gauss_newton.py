"""Gauss-Newton products Jᵀ ∇²L J v built from the lattice loss Hessian.

The per-frame loss Hessian with respect to the linear output activations is
(κ²/R)[diag(γ̂) − γ̂γᵀ]. With γ̂ = γ (MMI, cross entropy) this is the
covariance of the frame occupancy and is PSD. For MBR criteria γ̂ carries
signed loss differences, so even the symmetrized form can be indefinite;
`HessianMode.PSD` clips the negative eigenvalues of each frame block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ngseq.curvature.operator import CurvatureKind, CurvatureOperator, HessianMode
from ngseq.errors import UsageError
from ngseq.lattice.criteria import CriterionKind, UtteranceStats, combine, utterance_term
from ngseq.lattice.model import UtteranceExample
from ngseq.net.network import ActivationRecord, Network, forward, rop, rop_transpose, theta_digest
from ngseq.parallel import map_ordered


def _as_frames(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def loss_hessian_apply(
    gamma: np.ndarray,
    gamma_hat: np.ndarray,
    kappa: float,
    num_utterances: float,
    u: np.ndarray,
    mode: HessianMode | str = HessianMode.SYMMETRIZED,
) -> np.ndarray:
    """Apply the frame loss Hessian to u without building the D × D matrix.

    Accepts one frame (vectors of length D) or T frames (T × D matrices);
    every row is an independent frame block. `PSD` mode is the exception
    and does build each D × D block to clip it.
    """
    mode = HessianMode(mode)
    g, gh, uu = _as_frames(gamma), _as_frames(gamma_hat), _as_frames(u)
    if not (g.shape == gh.shape == uu.shape):
        raise UsageError(f"shape mismatch: γ {g.shape}, γ̂ {gh.shape}, u {uu.shape}")
    if num_utterances <= 0:
        raise UsageError(f"utterance count must be positive, got {num_utterances}")
    scale = kappa**2 / num_utterances
    if mode is HessianMode.IDENTITY:
        out = uu.copy()
    elif mode is HessianMode.PSD:
        out = scale * np.einsum("tij,tj->ti", psd_frame_hessians(g, gh), uu)
    else:
        g_dot_u = np.sum(g * uu, axis=1, keepdims=True)
        if mode is HessianMode.UNSYMMETRIZED:
            out = scale * (gh * uu - gh * g_dot_u)
        else:
            gh_dot_u = np.sum(gh * uu, axis=1, keepdims=True)
            out = scale * (gh * uu - 0.5 * (gh * g_dot_u + g * gh_dot_u))
    return out[0] if np.ndim(u) == 1 else out


def symmetrized_frame_hessians(gamma: np.ndarray, gamma_hat: np.ndarray) -> np.ndarray:
    """diag(γ̂) − ½(γ̂γᵀ + γγ̂ᵀ) for every frame, shape T × D × D (unscaled)."""
    g, gh = _as_frames(gamma), _as_frames(gamma_hat)
    outer = gh[:, :, None] * g[:, None, :]
    m = -0.5 * (outer + np.transpose(outer, (0, 2, 1)))
    idx = np.arange(g.shape[1])
    m[:, idx, idx] += gh
    return m


def psd_frame_hessians(gamma: np.ndarray, gamma_hat: np.ndarray) -> np.ndarray:
    """Symmetrized frame blocks with negative eigenvalues set to zero."""
    w, v = np.linalg.eigh(symmetrized_frame_hessians(gamma, gamma_hat))
    w = np.clip(w, 0.0, None)
    return np.einsum("tik,tk,tjk->tij", v, w, v)


@dataclass(frozen=True)
class CurvatureBatch:
    """Cached forward passes and loss statistics for the curvature subsample."""

    utterances: tuple[UtteranceExample, ...]
    records: tuple[ActivationRecord, ...]
    stats: tuple[UtteranceStats, ...]
    kind: CriterionKind
    kappa: float
    normalizer: float
    theta_digest: str

    @property
    def size(self) -> int:
        return len(self.utterances)


def prepare_curvature_batch(
    net: Network,
    theta: np.ndarray,
    utterances: Sequence[UtteranceExample],
    kind: CriterionKind | str,
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    workers: int = 1,
) -> CurvatureBatch:
    """Run forward and forward-backward once per utterance under θ.

    Cross entropy normalises by the number of frames; sequence criteria by
    the number of utterances.
    """
    kind = CriterionKind(kind)
    if not utterances:
        raise UsageError("curvature batch is empty")

    def one(utt: UtteranceExample):
        record = forward(net, theta, utt.frames)
        return record, utterance_term(kind, utt, record.outputs, kappa, log_priors=log_priors)

    results = map_ordered(one, utterances, workers)
    normalizer = (
        float(sum(u.num_frames for u in utterances)) if kind is CriterionKind.CE else None
    )
    output = combine(kind, [term for _, term in results], kappa, normalizer)
    return CurvatureBatch(
        utterances=tuple(utterances),
        records=tuple(record for record, _ in results),
        stats=output.auxiliary,
        kind=kind,
        kappa=1.0 if kind is CriterionKind.CE else kappa,
        normalizer=output.normalizer,
        theta_digest=theta_digest(net.check_theta(theta)),
    )


def gn_apply(
    net: Network,
    theta: np.ndarray,
    batch: CurvatureBatch,
    damping: float,
    v: np.ndarray,
    *,
    mode: HessianMode | str = HessianMode.SYMMETRIZED,
) -> np.ndarray:
    """Σ_t J_tᵀ ∇²L_t J_t v over the curvature batch, plus λv."""
    return GaussNewtonOperator(net, theta, batch, damping=damping, mode=mode).apply(v)


class GaussNewtonOperator(CurvatureOperator):
    def __init__(
        self,
        net: Network,
        theta: np.ndarray,
        batch: CurvatureBatch,
        *,
        damping: float = 0.0,
        mode: HessianMode | str = HessianMode.PSD,
        workers: int = 1,
    ) -> None:
        super().__init__(CurvatureKind.GAUSS_NEWTON, net.num_params, damping)
        theta = net.check_theta(theta)
        if theta_digest(theta) != batch.theta_digest:
            raise UsageError("curvature batch was cached under different parameters")
        self.net = net
        self.theta = theta
        self.batch = batch
        self.mode = HessianMode(mode)
        self.workers = workers
        self._frame_blocks: tuple[np.ndarray, ...] | None = None
        if self.mode is HessianMode.PSD:
            self._frame_blocks = tuple(
                psd_frame_hessians(s.gamma, s.gamma_hat) for s in batch.stats
            )

    def _loss_hessian(self, k: int, u: np.ndarray) -> np.ndarray:
        stats = self.batch.stats[k]
        if self._frame_blocks is not None:
            scale = self.batch.kappa**2 / self.batch.normalizer
            return scale * np.einsum("tij,tj->ti", self._frame_blocks[k], u)
        return loss_hessian_apply(
            stats.gamma, stats.gamma_hat, self.batch.kappa, self.batch.normalizer, u, self.mode
        )

    def curvature_product(self, v: np.ndarray) -> np.ndarray:
        def one(k: int) -> np.ndarray:
            record = self.batch.records[k]
            jv = rop(self.net, self.theta, record, v)
            return rop_transpose(self.net, self.theta, record, self._loss_hessian(k, jv))

        out = np.zeros(self.dim)
        for part in map_ordered(one, range(self.batch.size), self.workers):
            out += part
        return out
