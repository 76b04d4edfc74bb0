"""Empirical Fisher information from per-utterance MMI gradients."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ngseq.curvature.operator import CurvatureKind, CurvatureOperator
from ngseq.errors import UsageError
from ngseq.lattice.criteria import mmi_utterance
from ngseq.lattice.model import UtteranceExample
from ngseq.net.network import Network, backward, forward
from ngseq.parallel import map_ordered


def fisher_apply(grads: Sequence[np.ndarray], damping: float, v: np.ndarray) -> np.ndarray:
    """(1/R) Σ_r g_r (g_r · v) + λv, accumulated in utterance order."""
    if len(grads) == 0:
        raise UsageError("empirical Fisher needs at least one gradient")
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    for g in grads:
        out += g * float(np.dot(g, v))
    out /= len(grads)
    if damping:
        out += damping * v
    return out


def build_fisher_gradients(
    net: Network,
    theta: np.ndarray,
    utterances: Sequence[UtteranceExample],
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    workers: int = 1,
) -> list[np.ndarray]:
    """∇_θ log P_κ(H^r|O^r) for each utterance, not divided by R."""
    if not utterances:
        raise UsageError("curvature batch is empty")

    def one(utt: UtteranceExample) -> np.ndarray:
        record = forward(net, theta, utt.frames)
        term = mmi_utterance(utt, record.outputs, kappa, log_priors=log_priors)
        return backward(net, theta, record, term.gradient)

    return map_ordered(one, utterances, workers)


class EmpiricalFisherOperator(CurvatureOperator):
    """v ↦ scale · (1/R) Σ g_r g_rᵀ v + floor · v.

    `scale` is the trust-region multiplier adapted by the natural-gradient
    update; `floor` keeps the system definite outside the span of the g_r
    and is the operator's damping.
    """

    def __init__(
        self, grads: Sequence[np.ndarray], *, scale: float = 1.0, floor: float = 0.0
    ) -> None:
        if len(grads) == 0:
            raise UsageError("empirical Fisher needs at least one gradient")
        if scale <= 0:
            raise UsageError(f"Fisher scale must be positive, got {scale}")
        stacked = np.vstack([np.asarray(g, dtype=np.float64) for g in grads])
        super().__init__(CurvatureKind.EMPIRICAL_FISHER, stacked.shape[1], floor)
        self.grads = stacked
        self.scale = float(scale)

    @property
    def num_utterances(self) -> int:
        return int(self.grads.shape[0])

    def curvature_product(self, v: np.ndarray) -> np.ndarray:
        return self.scale * fisher_apply(self.grads, 0.0, v)

    def with_scale(self, scale: float) -> "EmpiricalFisherOperator":
        if scale <= 0:
            raise UsageError(f"Fisher scale must be positive, got {scale}")
        clone = self.with_damping(self.damping)
        clone.scale = float(scale)
        return clone  # type: ignore[return-value]
