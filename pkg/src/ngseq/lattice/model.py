"""Lattice, reference and utterance types.

A lattice is a DAG whose nodes carry frame times. An arc from a node at time
s to a node at time e spans frames s .. e-1 and carries one state label per
frame, a log transition weight and (optionally) a local loss. The start node
is at time 0 and the end node at time T, so the arcs of every complete path
tile the frames 0 .. T-1 exactly once.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import StrEnum
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from ngseq.errors import DataError, UsageError
from ngseq.net.network import FrameBatch

logger = logging.getLogger(__name__)


class LossLevel(StrEnum):
    PHONE = "phone"
    STATE = "state"


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    labels: tuple[int, ...]
    log_weight: float
    loss: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    @property
    def span(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Lattice:
    times: tuple[int, ...]
    arcs: tuple[Arc, ...]
    start: int
    end: int
    loss_level: LossLevel | None = None
    _index: "_LatticeIndex" = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(int(t) for t in self.times))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        if self.loss_level is not None:
            object.__setattr__(self, "loss_level", LossLevel(self.loss_level))
        if not self.arcs:
            raise UsageError("lattice has no arcs")
        num_nodes = len(self.times)
        if not (0 <= self.start < num_nodes and 0 <= self.end < num_nodes):
            raise DataError(f"start/end node ({self.start}, {self.end}) outside {num_nodes} nodes")
        if self.times[self.start] != 0:
            raise DataError(f"start node must be at time 0, got {self.times[self.start]}")
        if self.times[self.end] != max(self.times):
            raise DataError("end node must carry the largest frame time")
        with_loss = [a.loss is not None for a in self.arcs]
        if any(with_loss) and not all(with_loss):
            raise DataError("either every arc or no arc carries a local loss")
        if self.loss_level is not None and not all(with_loss):
            raise DataError(f"lattice declares {self.loss_level} losses but arcs carry none")
        for i, arc in enumerate(self.arcs):
            if not (0 <= arc.src < num_nodes and 0 <= arc.dst < num_nodes):
                raise DataError(f"arc {i} references a node outside 0..{num_nodes - 1}")
            span = self.times[arc.dst] - self.times[arc.src]
            if span < 1 or span != len(arc.labels):
                raise DataError(
                    f"arc {i} spans {span} frames but carries {len(arc.labels)} labels"
                )
            if min(arc.labels) < 0:
                raise DataError(f"arc {i} has a negative state label")
            if not np.isfinite(arc.log_weight):
                raise DataError(f"arc {i} has a non-finite transition weight")
        object.__setattr__(self, "_index", _LatticeIndex.build(self))
        if not self._index.end_reachable:
            raise DataError("lattice has no complete start→end path")

    @property
    def num_nodes(self) -> int:
        return len(self.times)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    @property
    def num_frames(self) -> int:
        return self.times[self.end]

    @property
    def max_label(self) -> int:
        return int(self._index.occ_label.max())

    @property
    def has_losses(self) -> bool:
        return self.arcs[0].loss is not None

    @property
    def index(self) -> "_LatticeIndex":
        return self._index

    def with_losses(self, losses: Sequence[float], level: LossLevel) -> "Lattice":
        if len(losses) != self.num_arcs:
            raise DataError(f"{len(losses)} losses for {self.num_arcs} arcs")
        arcs = tuple(dataclasses.replace(a, loss=float(l)) for a, l in zip(self.arcs, losses))
        return Lattice(self.times, arcs, self.start, self.end, loss_level=level)

    def count_paths(self) -> int:
        """Number of complete start→end paths (exact integer)."""
        counts = [0] * self.num_nodes
        counts[self.start] = 1
        for node in self._index.order:
            for a in self._index.in_arcs[node]:
                counts[node] += counts[self.arcs[a].src]
        return counts[self.end]


@dataclass(frozen=True, eq=False)
class _LatticeIndex:
    """Array views of a lattice used by the recursions."""

    order: tuple[int, ...]
    in_arcs: tuple[np.ndarray, ...]
    out_arcs: tuple[np.ndarray, ...]
    src: np.ndarray
    dst: np.ndarray
    log_weight: np.ndarray
    loss: np.ndarray
    occ_arc: np.ndarray
    occ_frame: np.ndarray
    occ_label: np.ndarray
    end_reachable: bool

    @classmethod
    def build(cls, lat: Lattice) -> "_LatticeIndex":
        n = len(lat.times)
        # every arc moves forward in time, so time order is a topological order
        order = tuple(sorted(range(n), key=lambda v: (lat.times[v], v)))
        incoming: list[list[int]] = [[] for _ in range(n)]
        outgoing: list[list[int]] = [[] for _ in range(n)]
        for i, arc in enumerate(lat.arcs):
            incoming[arc.dst].append(i)
            outgoing[arc.src].append(i)
        occ_arc, occ_frame, occ_label = [], [], []
        for i, arc in enumerate(lat.arcs):
            t0 = lat.times[arc.src]
            for k, label in enumerate(arc.labels):
                occ_arc.append(i)
                occ_frame.append(t0 + k)
                occ_label.append(label)
        reach = [False] * n
        reach[lat.start] = True
        for v in order:
            if reach[v]:
                for i in outgoing[v]:
                    reach[lat.arcs[i].dst] = True
        loss = np.array(
            [np.nan if a.loss is None else a.loss for a in lat.arcs], dtype=np.float64
        )
        arrays = dict(
            src=np.array([a.src for a in lat.arcs], dtype=np.int64),
            dst=np.array([a.dst for a in lat.arcs], dtype=np.int64),
            log_weight=np.array([a.log_weight for a in lat.arcs], dtype=np.float64),
            loss=loss,
            occ_arc=np.array(occ_arc, dtype=np.int64),
            occ_frame=np.array(occ_frame, dtype=np.int64),
            occ_label=np.array(occ_label, dtype=np.int64),
        )
        for arr in arrays.values():
            arr.setflags(write=False)
        return cls(
            order=order,
            in_arcs=tuple(np.array(x, dtype=np.int64) for x in incoming),
            out_arcs=tuple(np.array(x, dtype=np.int64) for x in outgoing),
            end_reachable=reach[lat.end],
            **arrays,
        )


def path_symbols(labels: Sequence[int], symbol_map: np.ndarray | None = None) -> tuple[int, ...]:
    """Per-frame state labels → symbols, with consecutive repeats collapsed."""
    out: list[int] = []
    for label in labels:
        sym = int(symbol_map[label]) if symbol_map is not None else int(label)
        if not out or out[-1] != sym:
            out.append(sym)
    return tuple(out)


@dataclass(frozen=True)
class Reference:
    states: tuple[int, ...]
    symbols: tuple[int, ...]

    @classmethod
    def from_states(cls, states: Sequence[int], symbol_map: np.ndarray | None = None) -> "Reference":
        states = tuple(int(s) for s in states)
        return cls(states=states, symbols=path_symbols(states, symbol_map))

    @property
    def num_frames(self) -> int:
        return len(self.states)


def locate_path(lat: Lattice, labels: Sequence[int]) -> tuple[int, ...]:
    """Highest-weight complete path whose frame labels equal *labels*."""
    labels = tuple(int(x) for x in labels)
    if len(labels) != lat.num_frames:
        raise DataError(f"reference has {len(labels)} frames, lattice has {lat.num_frames}")
    best: list[float] = [-np.inf] * lat.num_nodes
    back: list[int] = [-1] * lat.num_nodes
    best[lat.start] = 0.0
    for v in lat.index.order:
        for i in lat.index.in_arcs[v]:
            arc = lat.arcs[i]
            if best[arc.src] == -np.inf:
                continue
            t0 = lat.times[arc.src]
            if arc.labels != labels[t0 : t0 + arc.span]:
                continue
            score = best[arc.src] + arc.log_weight
            if score > best[v]:
                best[v] = score
                back[v] = int(i)
    if best[lat.end] == -np.inf:
        raise DataError("reference path is not present in the lattice")
    path: list[int] = []
    node = lat.end
    while node != lat.start:
        path.append(back[node])
        node = lat.arcs[back[node]].src
    return tuple(reversed(path))


@dataclass(frozen=True)
class UtteranceExample:
    utterance_id: str
    frames: FrameBatch
    reference: Reference
    denominator: Lattice
    numerator_arcs: tuple[int, ...]
    annotated: Mapping[LossLevel, Lattice] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lat = self.denominator
        T = self.frames.num_frames
        if lat.num_frames != T or self.reference.num_frames != T:
            raise DataError(
                f"{self.utterance_id}: frames={T}, lattice={lat.num_frames}, "
                f"reference={self.reference.num_frames}"
            )
        arcs = tuple(int(a) for a in self.numerator_arcs)
        node = lat.start
        labels: list[int] = []
        for a in arcs:
            if not 0 <= a < lat.num_arcs or lat.arcs[a].src != node:
                raise DataError(f"{self.utterance_id}: numerator arcs do not form a lattice path")
            labels.extend(lat.arcs[a].labels)
            node = lat.arcs[a].dst
        if node != lat.end or tuple(labels) != self.reference.states:
            raise DataError(f"{self.utterance_id}: numerator path does not match the reference")
        for level, annotated in self.annotated.items():
            if annotated.loss_level != level or annotated.num_arcs != lat.num_arcs:
                raise DataError(f"{self.utterance_id}: bad {level} annotation")
        object.__setattr__(self, "numerator_arcs", arcs)
        object.__setattr__(self, "annotated", MappingProxyType(dict(self.annotated)))

    @classmethod
    def build(
        cls,
        utterance_id: str,
        frames: FrameBatch,
        reference: Reference,
        denominator: Lattice,
        numerator_arcs: Sequence[int] | None = None,
        levels: Sequence[LossLevel] = (LossLevel.PHONE, LossLevel.STATE),
    ) -> "UtteranceExample":
        from ngseq.lattice.loss import annotate_local_loss

        if numerator_arcs is None:
            numerator_arcs = locate_path(denominator, reference.states)
        annotated = {lvl: annotate_local_loss(denominator, reference, lvl) for lvl in levels}
        return cls(utterance_id, frames, reference, denominator, tuple(numerator_arcs), annotated)

    @property
    def num_frames(self) -> int:
        return self.frames.num_frames

    def lattice_for(self, level: LossLevel | None) -> Lattice:
        if level is None:
            return self.denominator
        try:
            return self.annotated[level]
        except KeyError:
            raise DataError(f"{self.utterance_id}: no {level}-level loss annotation") from None
