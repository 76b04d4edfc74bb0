"""Local-loss annotation and edit distance."""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

from ngseq.errors import DataError
from ngseq.lattice.model import Lattice, LossLevel, Reference


def annotate_local_loss(
    lat: Lattice, reference: Reference | Sequence[int], level: LossLevel | str
) -> Lattice:
    """Return a copy of *lat* whose arcs carry L(q, q^r) at *level*.

    state: number of frames of the arc whose label differs from the reference
    state. phone: the arc is one unit; its loss is 0 when its labels agree with
    the time-aligned reference for more than half of its span, 1 otherwise.
    """
    level = LossLevel(level)
    states = reference.states if isinstance(reference, Reference) else tuple(reference)
    ref = np.asarray(states, dtype=np.int64)
    if ref.shape[0] != lat.num_frames:
        raise DataError(f"reference spans {ref.shape[0]} frames, lattice spans {lat.num_frames}")
    losses: list[float] = []
    for arc in lat.arcs:
        t0 = lat.times[arc.src]
        matches = int(np.sum(np.asarray(arc.labels) == ref[t0 : t0 + arc.span]))
        if level is LossLevel.STATE:
            losses.append(float(arc.span - matches))
        else:
            losses.append(0.0 if 2 * matches > arc.span else 1.0)
    return lat.with_losses(losses, level)


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Minimal number of insertions, deletions and substitutions turning a into b."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (x != y),  # substitution
                )
            )
        previous = current
    return previous[-1]


def token_error_rate(hypothesis: Sequence[Hashable], reference: Sequence[Hashable]) -> float:
    return levenshtein(hypothesis, reference) / max(len(reference), 1)
