"""KL divergence between hypothesis posteriors, exact and to second order.

Hypotheses are the complete lattice paths. The quadratic form uses the
exact Fisher information, the expectation over all enumerated hypotheses,
so the gap to the empirical Fisher is measured separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ngseq.curvature import DenseOperator
from ngseq.errors import UsageError
from ngseq.lattice.model import UtteranceExample
from ngseq.net.network import Network, forward
from ngseq.oracle.dense import explicit_jacobian
from ngseq.oracle.enumeration import enumerate_paths, enumeration_statistics


@dataclass(frozen=True)
class KLCheck:
    exact_kl: float
    quadratic_form: float

    @property
    def ratio(self) -> float:
        if self.quadratic_form == 0.0:
            return 1.0 if self.exact_kl == 0.0 else float("inf")
        return self.exact_kl / self.quadratic_form

    @property
    def remainder(self) -> float:
        return abs(self.exact_kl - self.quadratic_form)


def _score_gradients(
    net: Network, theta: np.ndarray, utt: UtteranceExample, kappa: float
) -> tuple[np.ndarray, np.ndarray]:
    """Path posteriors and ∇_θ log P(H|O) for every path H, shape (paths, P)."""
    outputs = forward(net, theta, utt.frames).outputs
    paths = enumerate_paths(utt.denominator, outputs, kappa)
    stats = enumeration_statistics(paths, outputs.shape[0], outputs.shape[1])
    jac = explicit_jacobian(net, theta, utt.frames)
    frames = np.arange(outputs.shape[0])
    scores = np.zeros((len(paths), net.num_params))
    for k, path in enumerate(paths):
        target = np.zeros_like(stats.gamma)
        target[frames, np.asarray(path.labels)] = 1.0
        scores[k] = np.einsum("tdp,td->p", jac, kappa * (target - stats.gamma))
    return stats.posteriors, scores


def exact_fisher(
    net: Network, theta: np.ndarray, batch: Sequence[UtteranceExample], kappa: float
) -> DenseOperator:
    """(1/R) Σ_r E_{H∼P_θ}[∇log P(H|O^r) ∇log P(H|O^r)ᵀ]."""
    if not batch:
        raise UsageError("exact Fisher needs at least one utterance")
    total = np.zeros((net.num_params, net.num_params))
    for utt in batch:
        post, scores = _score_gradients(net, theta, utt, kappa)
        total += (scores * post[:, None]).T @ scores
    return DenseOperator(total / len(batch))


def exact_fisher_quadratic(
    net: Network,
    theta: np.ndarray,
    delta: np.ndarray,
    batch: Sequence[UtteranceExample],
    kappa: float,
) -> float:
    """½ Δθᵀ I_θ Δθ with the exact Fisher I_θ."""
    if not batch:
        raise UsageError("exact Fisher needs at least one utterance")
    delta = net.check_theta(delta)
    total = 0.0
    for utt in batch:
        post, scores = _score_gradients(net, theta, utt, kappa)
        total += float(np.dot(post, (scores @ delta) ** 2))
    return 0.5 * total / len(batch)


def exact_kl(
    net: Network,
    theta: np.ndarray,
    delta: np.ndarray,
    batch: Sequence[UtteranceExample],
    kappa: float,
) -> float:
    """(1/R) Σ_r KL(P_θ(·|O^r) ‖ P_{θ+Δθ}(·|O^r)) by enumeration."""
    if not batch:
        raise UsageError("KL needs at least one utterance")
    moved = net.check_theta(theta) + net.check_theta(delta)
    total = 0.0
    for utt in batch:
        before = enumerate_paths(utt.denominator, forward(net, theta, utt.frames).outputs, kappa)
        after = enumerate_paths(utt.denominator, forward(net, moved, utt.frames).outputs, kappa)
        s0 = np.array([p.score for p in before])
        s1 = np.array([p.score for p in after])
        log_p = s0 - np.logaddexp.reduce(s0)
        log_q = s1 - np.logaddexp.reduce(s1)
        total += float(np.dot(np.exp(log_p), log_p - log_q))
    return total / len(batch)


def kl_quadratic_check(
    net: Network,
    theta: np.ndarray,
    delta: np.ndarray,
    batch: Sequence[UtteranceExample],
    kappa: float,
) -> KLCheck:
    return KLCheck(
        exact_kl=exact_kl(net, theta, delta, batch, kappa),
        quadratic_form=exact_fisher_quadratic(net, theta, delta, batch, kappa),
    )
