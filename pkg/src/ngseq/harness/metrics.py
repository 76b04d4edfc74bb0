"""Append-only run log with CE, update and epoch rows.

All rows share one CSV header; columns that do not apply to a row type are
left empty. `wall_clock` is the only non-deterministic column.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from ngseq.errors import UsageError
from ngseq.file_io import atomic_write_text
from ngseq.optim.config import UpdateRecord


class RowType(StrEnum):
    CE = "ce"
    UPDATE = "update"
    EPOCH = "epoch"


CSV_HEADER: tuple[str, ...] = (
    "row",
    "epoch",
    "update",
    "method",
    "loss_before",
    "loss_after",
    "step_norm",
    "damping",
    "cg_iterations",
    "accepted",
    "backtracks",
    "rho",
    "skipped",
    "train_loss",
    "train_criterion",
    "train_accuracy",
    "valid_criterion",
    "valid_accuracy",
    "valid_token_error_rate",
    "valid_frame_accuracy",
    "gradient_evaluations",
    "curvature_products",
    "cumulative_compute",
    "wall_clock",
)

WALL_CLOCK_COLUMNS = frozenset({"wall_clock"})


@dataclass(frozen=True)
class SplitEvaluation:
    criterion: float
    loss: float
    accuracy: float
    token_error_rate: float
    frame_accuracy: float


@dataclass
class MetricsLog:
    rows: list[dict[str, Any]] = field(default_factory=list)
    _last_update: int = 0
    _gradient_total: int = 0
    _curvature_total: int = 0

    @property
    def num_updates(self) -> int:
        return self._last_update

    @property
    def compute(self) -> dict[str, int]:
        return {
            "gradient_evaluations": self._gradient_total,
            "curvature_products": self._curvature_total,
        }

    def _append(self, row_type: RowType, values: dict[str, Any]) -> dict[str, Any]:
        unknown = set(values) - set(CSV_HEADER)
        if unknown:
            raise UsageError(f"unknown metrics columns: {sorted(unknown)}")
        row = {"row": str(row_type), **values}
        self.rows.append(row)
        return row

    def append_ce(self, epoch: int, train_loss: float, valid_frame_accuracy: float, wall_clock: float) -> dict[str, Any]:
        return self._append(
            RowType.CE,
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "valid_frame_accuracy": valid_frame_accuracy,
                "wall_clock": wall_clock,
            },
        )

    def append_update(self, epoch: int, record: UpdateRecord) -> dict[str, Any]:
        if record.index <= self._last_update:
            raise UsageError(
                f"update {record.index} logged after update {self._last_update}"
            )
        self._last_update = record.index
        self._gradient_total += record.gradient_evaluations
        self._curvature_total += record.curvature_products
        return self._append(
            RowType.UPDATE,
            {
                "epoch": epoch,
                "update": record.index,
                "method": record.method,
                "loss_before": record.loss_before,
                "loss_after": record.loss_after,
                "step_norm": record.step_norm,
                "damping": record.damping,
                "cg_iterations": record.cg_iterations,
                "accepted": record.accepted,
                "backtracks": record.backtracks,
                "rho": record.rho,
                "skipped": record.skipped,
                "gradient_evaluations": record.gradient_evaluations,
                "curvature_products": record.curvature_products,
                "cumulative_compute": self._gradient_total + self._curvature_total,
                "wall_clock": record.wall_clock,
            },
        )

    def append_epoch(
        self,
        epoch: int,
        method: str,
        train: SplitEvaluation,
        valid: SplitEvaluation,
        wall_clock: float,
    ) -> dict[str, Any]:
        return self._append(
            RowType.EPOCH,
            {
                "epoch": epoch,
                "update": self._last_update,
                "method": method,
                "train_loss": train.loss,
                "train_criterion": train.criterion,
                "train_accuracy": train.accuracy,
                "valid_criterion": valid.criterion,
                "valid_accuracy": valid.accuracy,
                "valid_token_error_rate": valid.token_error_rate,
                "valid_frame_accuracy": valid.frame_accuracy,
                "gradient_evaluations": self._gradient_total,
                "curvature_products": self._curvature_total,
                "cumulative_compute": self._gradient_total + self._curvature_total,
                "wall_clock": wall_clock,
            },
        )

    def rows_of(self, row_type: RowType | str) -> list[dict[str, Any]]:
        return [r for r in self.rows if r["row"] == str(row_type)]

    def deterministic_rows(self) -> list[dict[str, Any]]:
        return [{k: v for k, v in r.items() if k not in WALL_CLOCK_COLUMNS} for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _cell(row.get(k)) for k in CSV_HEADER})
        return buf.getvalue()

    def write_csv(self, path: Path) -> None:
        atomic_write_text(path, self.to_csv())


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary(path: Path, summary: dict[str, Any]) -> None:
    atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
