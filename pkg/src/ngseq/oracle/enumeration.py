"""Exhaustive lattice path enumeration.

Scores are recomputed path by path from the raw activations, so nothing
here shares code with the forward-backward recursions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp

from ngseq.errors import UsageError
from ngseq.lattice.model import Lattice, path_symbols

MAX_PATHS = 10_000


@dataclass(frozen=True)
class EnumeratedPath:
    arcs: tuple[int, ...]
    score: float
    labels: tuple[int, ...]
    symbols: tuple[int, ...]
    loss: float | None


@dataclass(frozen=True)
class EnumerationStats:
    """Path-distribution quantities computed by brute force.

    `loss_vector[t, i]` is the posterior-weighted loss of the paths that
    occupy state i at frame t (0 where γ is 0); `gamma_hat` is
    γ ⊙ (loss_vector − c_avg).
    """

    log_z: float
    posteriors: np.ndarray
    gamma: np.ndarray
    loss_vector: np.ndarray | None
    c_avg: float | None
    gamma_hat: np.ndarray | None
    entropy: float


def _frame_loglikes(activations: np.ndarray, log_priors: np.ndarray | None) -> np.ndarray:
    ll = log_softmax(np.asarray(activations, dtype=np.float64), axis=1)
    return ll if log_priors is None else ll - log_priors


def enumerate_paths(
    lat: Lattice,
    activations: np.ndarray,
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    symbol_map: np.ndarray | None = None,
    max_paths: int = MAX_PATHS,
) -> list[EnumeratedPath]:
    """Every start→end path with its κ-scaled log score, in depth-first order."""
    count = lat.count_paths()
    if count > max_paths:
        raise UsageError(f"lattice has {count} paths, enumeration limit is {max_paths}")
    ll = _frame_loglikes(activations, log_priors)
    outgoing: dict[int, list[int]] = {}
    for i, arc in enumerate(lat.arcs):
        outgoing.setdefault(arc.src, []).append(i)

    paths: list[EnumeratedPath] = []
    stack: list[tuple[int, tuple[int, ...]]] = [(lat.start, ())]
    while stack:
        node, arcs = stack.pop()
        if node == lat.end:
            labels: list[int] = []
            total = 0.0
            loss = 0.0 if lat.has_losses else None
            for a in arcs:
                arc = lat.arcs[a]
                t0 = lat.times[arc.src]
                total += arc.log_weight
                for k, label in enumerate(arc.labels):
                    total += ll[t0 + k, label]
                labels.extend(arc.labels)
                if loss is not None:
                    loss += arc.loss
            paths.append(
                EnumeratedPath(
                    arcs=arcs,
                    score=kappa * total,
                    labels=tuple(labels),
                    symbols=path_symbols(labels, symbol_map),
                    loss=loss,
                )
            )
            continue
        for a in reversed(outgoing.get(node, [])):
            stack.append((lat.arcs[a].dst, arcs + (a,)))
    return paths


def enumeration_statistics(
    paths: Sequence[EnumeratedPath], num_frames: int, num_states: int
) -> EnumerationStats:
    if not paths:
        raise UsageError("no paths to summarise")
    scores = np.array([p.score for p in paths])
    log_z = float(logsumexp(scores))
    post = np.exp(scores - log_z)
    gamma = np.zeros((num_frames, num_states))
    frames = np.arange(num_frames)
    for p, w in zip(paths, post):
        gamma[frames, np.asarray(p.labels)] += w
    with np.errstate(divide="ignore"):
        entropy = float(-np.sum(np.where(post > 0, post * np.log(post), 0.0)))

    loss_vector = c_avg = gamma_hat = None
    if paths[0].loss is not None:
        losses = np.array([p.loss for p in paths])
        c_avg = float(np.dot(post, losses))
        weighted = np.zeros((num_frames, num_states))
        for p, w, loss in zip(paths, post, losses):
            weighted[frames, np.asarray(p.labels)] += w * loss
        loss_vector = np.divide(weighted, gamma, out=np.zeros_like(weighted), where=gamma > 0)
        gamma_hat = weighted - gamma * c_avg
    return EnumerationStats(
        log_z=log_z,
        posteriors=post,
        gamma=gamma,
        loss_vector=loss_vector,
        c_avg=c_avg,
        gamma_hat=gamma_hat,
        entropy=entropy,
    )


def path_log_posterior(
    paths: Sequence[EnumeratedPath], arcs: Sequence[int]
) -> float:
    """log P_κ(path | O) for the path made of *arcs*."""
    arcs = tuple(arcs)
    scores = np.array([p.score for p in paths])
    for p in paths:
        if p.arcs == arcs:
            return float(p.score - logsumexp(scores))
    raise UsageError("path is not among the enumerated paths")
