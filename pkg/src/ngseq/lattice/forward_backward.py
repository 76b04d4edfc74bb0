"""Log-domain forward-backward over lattices with acoustic scaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

from ngseq.errors import NumericError, UsageError
from ngseq.lattice.model import Lattice

logger = logging.getLogger(__name__)

_Z_TOLERANCE = 1e-10


def acoustic_loglikes(activations: np.ndarray, log_priors: np.ndarray | None = None) -> np.ndarray:
    """Scaled log-likelihoods log softmax(a_t) − log prior, one row per frame."""
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2:
        raise UsageError(f"activations must be T × D, got {a.shape}")
    ll = log_softmax(a, axis=1)
    if log_priors is not None:
        ll = ll - np.asarray(log_priors, dtype=np.float64)
    return ll


@dataclass(frozen=True)
class PosteriorSet:
    """Forward-backward quantities for one lattice.

    `alpha[q]` is the log forward score through arc q (including q's own
    score) and `beta[q]` the log backward score from q's end node, so the arc
    posterior is exp(alpha + beta − log_z).
    """

    arc_scores: np.ndarray
    node_alpha: np.ndarray
    node_beta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    log_z: float
    log_z_backward: float
    arc_posteriors: np.ndarray
    gamma: np.ndarray


def _lse(x: np.ndarray) -> float:
    if x.size == 0 or not np.any(np.isfinite(x)):
        return -np.inf
    return float(logsumexp(x))


def arc_scores(lat: Lattice, loglikes: np.ndarray, kappa: float) -> np.ndarray:
    """κ-scaled log score of every arc: κ·(log t_q + Σ_frames log p(o_t|s))."""
    if kappa <= 0:
        raise UsageError(f"acoustic scale must be positive, got {kappa}")
    ll = np.asarray(loglikes, dtype=np.float64)
    if ll.ndim != 2 or ll.shape[0] != lat.num_frames or ll.shape[1] <= lat.max_label:
        raise UsageError(
            f"log-likelihoods have shape {ll.shape}; lattice needs ({lat.num_frames}, >{lat.max_label})"
        )
    if np.any(np.isnan(ll)):
        raise NumericError("NaN acoustic log-likelihood")
    idx = lat.index
    acoustic = np.bincount(
        idx.occ_arc, weights=ll[idx.occ_frame, idx.occ_label], minlength=lat.num_arcs
    )
    return kappa * (idx.log_weight + acoustic)


def forward_backward(lat: Lattice, loglikes: np.ndarray, kappa: float) -> PosteriorSet:
    idx = lat.index
    scores = arc_scores(lat, loglikes, kappa)

    node_alpha = np.full(lat.num_nodes, -np.inf)
    node_alpha[lat.start] = 0.0
    for v in idx.order:
        arcs = idx.in_arcs[v]
        if arcs.size:
            node_alpha[v] = _lse(node_alpha[idx.src[arcs]] + scores[arcs])

    node_beta = np.full(lat.num_nodes, -np.inf)
    node_beta[lat.end] = 0.0
    for v in reversed(idx.order):
        arcs = idx.out_arcs[v]
        if arcs.size:
            node_beta[v] = _lse(scores[arcs] + node_beta[idx.dst[arcs]])

    log_z = float(node_alpha[lat.end])
    log_z_backward = float(node_beta[lat.start])
    if not np.isfinite(log_z):
        raise NumericError(f"lattice partition function is not finite ({log_z})")
    if abs(log_z - log_z_backward) > _Z_TOLERANCE * max(1.0, abs(log_z)):
        logger.warning(
            "forward log Z = %.12g but backward log Z = %.12g", log_z, log_z_backward
        )

    alpha = node_alpha[idx.src] + scores
    beta = node_beta[idx.dst]
    with np.errstate(invalid="ignore"):
        post = np.exp(alpha + beta - log_z)
    post = np.nan_to_num(post, nan=0.0)

    num_states = np.asarray(loglikes).shape[1]
    gamma = np.zeros((lat.num_frames, num_states))
    np.add.at(gamma, (idx.occ_frame, idx.occ_label), post[idx.occ_arc])

    return PosteriorSet(
        arc_scores=scores,
        node_alpha=node_alpha,
        node_beta=node_beta,
        alpha=alpha,
        beta=beta,
        log_z=log_z,
        log_z_backward=log_z_backward,
        arc_posteriors=post,
        gamma=gamma,
    )


def expected_losses(lat: Lattice, post: PosteriorSet) -> tuple[np.ndarray, float]:
    """Path-conditioned expected loss per arc, and the lattice average.

    Returns (c, c_avg) where c[q] is the expected total loss of the paths
    through arc q and c_avg is the expected loss over all paths.
    """
    idx = lat.index
    loss = idx.loss
    scores = post.arc_scores

    prefix = np.zeros(lat.num_nodes)
    for v in idx.order:
        arcs = idx.in_arcs[v]
        if arcs.size and np.isfinite(post.node_alpha[v]):
            w = np.exp(post.node_alpha[idx.src[arcs]] + scores[arcs] - post.node_alpha[v])
            prefix[v] = float(np.dot(w, prefix[idx.src[arcs]] + loss[arcs]))

    suffix = np.zeros(lat.num_nodes)
    for v in reversed(idx.order):
        arcs = idx.out_arcs[v]
        if arcs.size and np.isfinite(post.node_beta[v]):
            w = np.exp(scores[arcs] + post.node_beta[idx.dst[arcs]] - post.node_beta[v])
            suffix[v] = float(np.dot(w, loss[arcs] + suffix[idx.dst[arcs]]))

    c = prefix[idx.src] + loss + suffix[idx.dst]
    return c, float(prefix[lat.end])
