"""Sequence criteria (MMI, MPE, sMBR) and frame cross entropy.

Each criterion returns its value in its natural form (F_MMI is a
log-probability to maximise; F_MBR an expected loss to minimise) together
with ∂F/∂a_t for every utterance. `CriterionOutput.loss` and
`.loss_gradients` give the minimisation form every optimizer consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from ngseq.errors import DataError, UsageError
from ngseq.lattice.forward_backward import acoustic_loglikes, expected_losses, forward_backward
from ngseq.lattice.model import LossLevel, UtteranceExample


class CriterionKind(StrEnum):
    MMI = "mmi"
    MPE = "mpe"
    SMBR = "smbr"
    CE = "ce"

    @property
    def loss_level(self) -> LossLevel | None:
        return {CriterionKind.MPE: LossLevel.PHONE, CriterionKind.SMBR: LossLevel.STATE}.get(self)

    @property
    def sign(self) -> float:
        """+1 when the natural value is already a loss, −1 when it is maximised."""
        return -1.0 if self is CriterionKind.MMI else 1.0


@dataclass(frozen=True)
class UtteranceStats:
    """Per-utterance quantities the Gauss-Newton loss Hessian needs.

    For MBR criteria gamma_hat = γ ⊙ (L̆ − c_avg); for MMI and CE it equals
    gamma, which turns the loss Hessian into diag(γ) − γγᵀ.
    """

    gamma: np.ndarray
    gamma_hat: np.ndarray
    c_avg: float | None
    value: float


@dataclass(frozen=True)
class UtteranceTerm:
    value: float
    gradient: np.ndarray
    stats: UtteranceStats


@dataclass(frozen=True)
class CriterionOutput:
    kind: CriterionKind
    value: float
    activation_gradients: tuple[np.ndarray, ...]
    auxiliary: tuple[UtteranceStats, ...]
    kappa: float
    normalizer: float
    hessian_scale: float

    @property
    def loss(self) -> float:
        return self.kind.sign * self.value

    @property
    def loss_gradients(self) -> tuple[np.ndarray, ...]:
        return tuple(self.kind.sign * g for g in self.activation_gradients)


def _one_hot(states: Sequence[int], num_states: int) -> np.ndarray:
    out = np.zeros((len(states), num_states))
    out[np.arange(len(states)), np.asarray(states, dtype=np.int64)] = 1.0
    return out


def mmi_utterance(
    utt: UtteranceExample,
    activations: np.ndarray,
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
) -> UtteranceTerm:
    """log P_κ(H^r|O^r) and its activation gradient κ(γ^num − γ^den)."""
    ll = acoustic_loglikes(activations, log_priors)
    post = forward_backward(utt.denominator, ll, kappa)
    num_score = float(post.arc_scores[list(utt.numerator_arcs)].sum())
    value = num_score - post.log_z
    gamma_num = _one_hot(utt.reference.states, ll.shape[1])
    gradient = kappa * (gamma_num - post.gamma)
    return UtteranceTerm(value, gradient, UtteranceStats(post.gamma, post.gamma, None, value))


def mbr_utterance(
    utt: UtteranceExample,
    activations: np.ndarray,
    kappa: float,
    level: LossLevel | str,
    *,
    log_priors: np.ndarray | None = None,
) -> UtteranceTerm:
    """Expected local loss and its activation gradient κ γ_t(i)(L̆(i) − c_avg)."""
    lat = utt.lattice_for(LossLevel(level))
    if not lat.has_losses:
        raise DataError(f"{utt.utterance_id}: lattice has no local losses")
    ll = acoustic_loglikes(activations, log_priors)
    post = forward_backward(lat, ll, kappa)
    c, c_avg = expected_losses(lat, post)
    idx = lat.index
    value = float(np.dot(post.arc_posteriors, idx.loss))
    per_arc = post.arc_posteriors * (c - c_avg)
    gamma_hat = np.zeros_like(post.gamma)
    np.add.at(gamma_hat, (idx.occ_frame, idx.occ_label), per_arc[idx.occ_arc])
    return UtteranceTerm(
        value, kappa * gamma_hat, UtteranceStats(post.gamma, gamma_hat, c_avg, value)
    )


def utterance_term(
    kind: CriterionKind | str,
    utt: UtteranceExample,
    activations: np.ndarray,
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
) -> UtteranceTerm:
    kind = CriterionKind(kind)
    if kind is CriterionKind.MMI:
        return mmi_utterance(utt, activations, kappa, log_priors=log_priors)
    if kind is CriterionKind.CE:
        return ce_utterance(utt.reference.states, activations)
    return mbr_utterance(utt, activations, kappa, kind.loss_level, log_priors=log_priors)


def combine(
    kind: CriterionKind | str, terms: Sequence[UtteranceTerm], kappa: float, normalizer: float | None = None
) -> CriterionOutput:
    """Sum per-utterance terms in order and scale by 1/R."""
    kind = CriterionKind(kind)
    if not terms:
        raise UsageError("criterion needs at least one utterance")
    norm = float(len(terms) if normalizer is None else normalizer)
    value = 0.0
    for term in terms:
        value += term.value
    hessian_scale = 1.0 / norm if kind is CriterionKind.CE else kappa**2 / norm
    return CriterionOutput(
        kind=kind,
        value=value / norm,
        activation_gradients=tuple(t.gradient / norm for t in terms),
        auxiliary=tuple(t.stats for t in terms),
        kappa=kappa,
        normalizer=norm,
        hessian_scale=hessian_scale,
    )


def mmi_criterion(
    batch: Sequence[UtteranceExample],
    activations: Sequence[np.ndarray],
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    normalizer: float | None = None,
) -> CriterionOutput:
    """F_MMI = (1/R) Σ_r log P_κ(H^r|O^r)."""
    _check_batch(batch, activations)
    terms = [mmi_utterance(u, a, kappa, log_priors=log_priors) for u, a in zip(batch, activations)]
    return combine(CriterionKind.MMI, terms, kappa, normalizer)


def mbr_criterion(
    batch: Sequence[UtteranceExample],
    activations: Sequence[np.ndarray],
    kappa: float,
    level: LossLevel | str,
    *,
    log_priors: np.ndarray | None = None,
    normalizer: float | None = None,
) -> CriterionOutput:
    """F_MBR = (1/R) Σ_r Σ_q γ_q L(q, q^r); phone level is MPE, state level sMBR."""
    _check_batch(batch, activations)
    level = LossLevel(level)
    kind = CriterionKind.MPE if level is LossLevel.PHONE else CriterionKind.SMBR
    terms = [
        mbr_utterance(u, a, kappa, level, log_priors=log_priors) for u, a in zip(batch, activations)
    ]
    return combine(kind, terms, kappa, normalizer)


def ce_utterance(targets: Sequence[int], activations: np.ndarray) -> UtteranceTerm:
    """Summed frame cross entropy of softmax(a_t) against the target states."""
    a = np.asarray(activations, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    logp = log_softmax(a, axis=1)
    value = -float(logp[np.arange(len(targets)), targets].sum())
    p = softmax(a, axis=1)
    gradient = p - _one_hot(targets, a.shape[1])
    return UtteranceTerm(value, gradient, UtteranceStats(p, p, None, value))


def cross_entropy(
    targets: Sequence[Sequence[int]], activations: Sequence[np.ndarray]
) -> CriterionOutput:
    """Mean per-frame cross entropy over all frames of the batch."""
    if len(targets) != len(activations):
        raise UsageError("targets and activations differ in length")
    terms = [ce_utterance(t, a) for t, a in zip(targets, activations)]
    num_frames = sum(len(t) for t in targets)
    return combine(CriterionKind.CE, terms, 1.0, normalizer=num_frames)


def criterion_accuracy(output: CriterionOutput, batch: Sequence[UtteranceExample]) -> float:
    """1 − normalised loss for MBR criteria, exp(F_MMI) for MMI."""
    if output.kind is CriterionKind.MMI:
        return float(np.exp(output.value))
    if output.kind is CriterionKind.CE:
        raise UsageError("frame accuracy is computed from activations, not the CE value")
    if output.kind is CriterionKind.MPE:
        units = sum(len(u.numerator_arcs) for u in batch)
    else:
        units = sum(u.num_frames for u in batch)
    expected = sum(s.value for s in output.auxiliary)
    return 1.0 - expected / max(units, 1)


def _check_batch(batch: Sequence[UtteranceExample], activations: Sequence[np.ndarray]) -> None:
    if not batch:
        raise UsageError("criterion needs at least one utterance")
    if len(batch) != len(activations):
        raise UsageError(f"{len(batch)} utterances but {len(activations)} activation matrices")
