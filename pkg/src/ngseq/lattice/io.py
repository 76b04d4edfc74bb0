"""Line-oriented lattice text format (see docs/formats.md)."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

from ngseq.errors import DataError, UsageError
from ngseq.file_io import atomic_write_text
from ngseq.lattice.model import Arc, Lattice

MAGIC = "ngseq-lattice"
VERSION = 1


def format_lattice(lat: Lattice) -> str:
    lines = [
        f"{MAGIC} {VERSION}",
        f"header {lat.num_nodes} {lat.num_arcs} {lat.num_frames}",
        f"start {lat.start} end {lat.end}",
    ]
    if lat.loss_level is not None:
        lines.append(f"level {lat.loss_level}")
    for node, t in enumerate(lat.times):
        lines.append(f"N {node} {t}")
    for arc in lat.arcs:
        loss = "-" if arc.loss is None else repr(float(arc.loss))
        labels = ",".join(str(x) for x in arc.labels)
        lines.append(f"A {arc.src} {arc.dst} {labels} {float(arc.log_weight)!r} {loss}")
    return "\n".join(lines) + "\n"


def parse_lattice(text: str | Iterable[str], *, source: str = "<string>") -> Lattice:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    body = [
        (n, line.strip())
        for n, line in enumerate(lines, start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not body:
        raise DataError(f"{source}: empty lattice file")

    def fail(lineno: int, msg: str) -> DataError:
        return DataError(f"{source}:{lineno}: {msg}")

    lineno, first = body[0]
    if first.split() != [MAGIC, str(VERSION)]:
        raise fail(lineno, f"expected '{MAGIC} {VERSION}', got {first!r}")

    num_nodes = num_arcs = num_frames = None
    start = end = None
    level = None
    times: dict[int, int] = {}
    arcs: list[Arc] = []
    for lineno, line in body[1:]:
        fields = line.split()
        try:
            match fields[0]:
                case "header":
                    num_nodes, num_arcs, num_frames = (int(x) for x in fields[1:4])
                case "start":
                    if len(fields) != 4 or fields[2] != "end":
                        raise fail(lineno, "expected 'start <node> end <node>'")
                    start, end = int(fields[1]), int(fields[3])
                case "level":
                    level = fields[1]
                case "N":
                    node, t = int(fields[1]), int(fields[2])
                    if node in times:
                        raise fail(lineno, f"node {node} defined twice")
                    times[node] = t
                case "A":
                    if len(fields) != 6:
                        raise fail(lineno, f"arc line needs 5 fields, got {len(fields) - 1}")
                    labels = tuple(int(x) for x in fields[3].split(","))
                    loss = None if fields[5] == "-" else float(fields[5])
                    arcs.append(Arc(int(fields[1]), int(fields[2]), labels, float(fields[4]), loss))
                case other:
                    raise fail(lineno, f"unknown record type {other!r}")
        except (ValueError, IndexError) as exc:
            raise fail(lineno, f"malformed line {line!r}: {exc}") from None

    if num_nodes is None or start is None:
        raise DataError(f"{source}: missing header or start/end line")
    if sorted(times) != list(range(num_nodes)):
        raise DataError(f"{source}: expected nodes 0..{num_nodes - 1}, got {len(times)} node lines")
    if len(arcs) != num_arcs:
        raise DataError(f"{source}: header declares {num_arcs} arcs, file has {len(arcs)}")
    try:
        lat = Lattice(tuple(times[i] for i in range(num_nodes)), tuple(arcs), start, end, level)
    except (ValueError, UsageError) as exc:
        raise DataError(f"{source}: {exc}") from None
    if lat.num_frames != num_frames:
        raise DataError(f"{source}: header declares {num_frames} frames, lattice has {lat.num_frames}")
    return lat


def write_lattice(lat: Lattice, path: Path) -> None:
    atomic_write_text(path, format_lattice(lat))


def read_lattice(path: Path) -> Lattice:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read lattice {path}: {exc}") from None
    return parse_lattice(text, source=str(path))
