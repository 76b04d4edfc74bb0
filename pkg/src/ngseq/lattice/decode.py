"""Best-path decoding over a lattice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ngseq.lattice.forward_backward import acoustic_loglikes, arc_scores
from ngseq.lattice.model import Lattice, path_symbols


@dataclass(frozen=True)
class ViterbiResult:
    arcs: tuple[int, ...]
    score: float
    labels: tuple[int, ...]
    symbols: tuple[int, ...]


def viterbi_decode(
    lat: Lattice,
    activations: np.ndarray,
    kappa: float,
    *,
    log_priors: np.ndarray | None = None,
    symbol_map: np.ndarray | None = None,
) -> ViterbiResult:
    """Max-score start→end path under κ-scaled arc scores (first best on ties)."""
    scores = arc_scores(lat, acoustic_loglikes(activations, log_priors), kappa)
    idx = lat.index
    best = np.full(lat.num_nodes, -np.inf)
    best[lat.start] = 0.0
    back = np.full(lat.num_nodes, -1, dtype=np.int64)
    for v in idx.order:
        arcs = idx.in_arcs[v]
        if arcs.size:
            cand = best[idx.src[arcs]] + scores[arcs]
            k = int(np.argmax(cand))
            if np.isfinite(cand[k]):
                best[v] = cand[k]
                back[v] = arcs[k]
    path: list[int] = []
    node = lat.end
    while node != lat.start:
        a = int(back[node])
        path.append(a)
        node = lat.arcs[a].src
    path.reverse()
    labels = tuple(label for a in path for label in lat.arcs[a].labels)
    return ViterbiResult(
        arcs=tuple(path),
        score=float(best[lat.end]),
        labels=labels,
        symbols=path_symbols(labels, symbol_map),
    )
