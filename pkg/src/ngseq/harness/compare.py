"""Run the optimizer matrix over seeds and summarise one row per method.

The same matrix feeds the convergence-trend and stability checks: medians
over seeds compare each method with the CE baseline and NG with HF.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ngseq.errors import TrainingAborted
from ngseq.file_io import atomic_write_text
from ngseq.harness.metrics import WALL_CLOCK_COLUMNS, MetricsLog, RowType
from ngseq.harness.run_config import RunConfig
from ngseq.harness.task import generate_task
from ngseq.harness.training import SUMMARY_KEYS, TrainingResult, train
from ngseq.net.checkpoint import load_checkpoint
from ngseq.optim.config import METHOD_KEYS, OptimizerConfig, OptimizerMethod

logger = logging.getLogger(__name__)

DEFAULT_METHODS = (OptimizerMethod.SGD, OptimizerMethod.HF, OptimizerMethod.DSAG_HF, OptimizerMethod.NG)
NUMERIC_KEYS = tuple(k for k in SUMMARY_KEYS if k != "method")
STABLE_METHODS = (OptimizerMethod.HF, OptimizerMethod.NG)
# NG must reach HF's final training loss within this share of HF's updates
UPDATE_BUDGET_FRACTION = 0.75


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    seeds: tuple[int, ...]
    aborted: int
    medians: dict[str, float]

    def to_mapping(self) -> dict[str, Any]:
        return {"method": self.method, "seeds": len(self.seeds), "aborted": self.aborted, **self.medians}


@dataclass(frozen=True)
class MatrixRun:
    method: str
    seed: int
    result: TrainingResult


@dataclass
class MatrixRuns:
    """Every finished run of a seed × method matrix, in training order."""

    seeds: tuple[int, ...]
    methods: tuple[str, ...]
    runs: list[MatrixRun] = field(default_factory=list)
    aborted: dict[str, int] = field(default_factory=dict)

    def of(self, method: OptimizerMethod | str) -> list[MatrixRun]:
        return [r for r in self.runs if r.method == str(method)]

    def summaries(self) -> list[dict[str, Any]]:
        return [r.result.summary for r in self.runs]

    def baselines(self) -> dict[int, dict[str, Any]]:
        found: dict[int, dict[str, Any]] = {}
        for r in self.runs:
            found.setdefault(r.seed, r.result.summary["ce_baseline"])
        return found


def optimizer_for(method: OptimizerMethod | str, base: OptimizerConfig) -> OptimizerConfig:
    """*base*'s settings carried over to *method* where they apply."""
    method = OptimizerMethod(method)
    if method is base.method:
        return base
    shared = {k: v for k, v in base.to_mapping().items() if k in METHOD_KEYS[method]}
    return OptimizerConfig.from_mapping(method, shared)


def train_matrix(
    base: RunConfig,
    seeds: Sequence[int],
    methods: Sequence[OptimizerMethod | str] = DEFAULT_METHODS,
) -> MatrixRuns:
    """Train every method on every seed; each seed shares one generated task."""
    names = tuple(str(OptimizerMethod(m)) for m in methods)
    matrix = MatrixRuns(tuple(seeds), names, aborted={m: 0 for m in names})
    for seed in seeds:
        task = replace(base.task, seed=seed)
        dataset = generate_task(task)
        for method in names:
            out = None if base.output_dir is None else base.output_dir / f"{method}-seed{seed}"
            run = replace(
                base, task=task, seed=seed, optimizer=optimizer_for(method, base.optimizer), output_dir=out
            )
            try:
                result = train(run, dataset=dataset)
            except TrainingAborted as exc:
                logger.warning("%s seed %d aborted: %s", method, seed, exc)
                matrix.aborted[method] += 1
                continue
            matrix.runs.append(MatrixRun(method, seed, result))
    return matrix


def comparison_rows(matrix: MatrixRuns) -> list[ComparisonRow]:
    rows: list[ComparisonRow] = []
    baselines = matrix.baselines()
    if baselines:
        rows.append(_median_row("ce", list(baselines.values()), matrix.seeds, 0))
    for method in matrix.methods:
        runs = [r.result.summary for r in matrix.of(method)]
        if runs:
            rows.append(_median_row(method, runs, matrix.seeds, matrix.aborted[method]))
        else:
            rows.append(ComparisonRow(method, matrix.seeds, matrix.aborted[method], {}))
    return rows


def run_matrix(
    base: RunConfig,
    seeds: Sequence[int],
    methods: Sequence[OptimizerMethod | str] = DEFAULT_METHODS,
) -> tuple[list[ComparisonRow], list[dict[str, Any]]]:
    matrix = train_matrix(base, seeds, methods)
    return comparison_rows(matrix), matrix.summaries()


def _median_row(method: str, runs: list[dict[str, Any]], seeds: tuple[int, ...], aborted: int) -> ComparisonRow:
    medians = {key: float(np.median([r[key] for r in runs])) for key in NUMERIC_KEYS}
    return ComparisonRow(method, seeds, aborted, medians)


@dataclass(frozen=True)
class TrendReport:
    failures: tuple[str, ...]
    update_ratio: float
    ng_accuracy: float
    hf_accuracy: float

    @property
    def passed(self) -> bool:
        return not self.failures

    def describe(self) -> str:
        if self.failures:
            return "; ".join(self.failures)
        return (
            f"NG/HF updates {self.update_ratio:.2f}, "
            f"validation accuracy NG {self.ng_accuracy:.3f} vs HF {self.hf_accuracy:.3f}"
        )


def updates_to_reach(metrics: MetricsLog, target_loss: float) -> int | None:
    """Update count at the first epoch whose training loss is at or below *target_loss*."""
    for row in metrics.rows_of(RowType.EPOCH):
        if row["train_loss"] <= target_loss:
            return int(row["update"])
    return None


def convergence_trend(matrix: MatrixRuns) -> TrendReport:
    """Sequence training against the CE baseline, and NG against HF, as seed medians.

    Every method's median validation TER must fall below the CE baseline's;
    NG's median validation accuracy must reach HF's; and NG must match HF's
    final training loss within `UPDATE_BUDGET_FRACTION` of HF's updates.
    """
    failures: list[str] = []
    baselines = matrix.baselines()
    if not baselines:
        return TrendReport(("no run finished",), math.inf, math.nan, math.nan)
    ce_ter = float(np.median([b["validation_token_error_rate"] for b in baselines.values()]))
    for method in matrix.methods:
        runs = matrix.of(method)
        if not runs:
            failures.append(f"{method}: every seed aborted")
            continue
        ter = float(np.median([r.result.summary["validation_token_error_rate"] for r in runs]))
        if not ter < ce_ter:
            failures.append(f"{method}: median validation TER {ter:.3f} does not beat CE {ce_ter:.3f}")

    hf_runs = {r.seed: r for r in matrix.of(OptimizerMethod.HF)}
    ng_runs = {r.seed: r for r in matrix.of(OptimizerMethod.NG)}
    shared = sorted(set(hf_runs) & set(ng_runs))
    if not shared:
        failures.append("needs hf and ng runs on a common seed")
        return TrendReport(tuple(failures), math.inf, math.nan, math.nan)

    hf_accuracy = float(np.median([hf_runs[s].result.summary["validation_accuracy"] for s in shared]))
    ng_accuracy = float(np.median([ng_runs[s].result.summary["validation_accuracy"] for s in shared]))
    if ng_accuracy < hf_accuracy:
        failures.append(f"NG median validation accuracy {ng_accuracy:.3f} below HF {hf_accuracy:.3f}")

    ratios = []
    for seed in shared:
        hf = hf_runs[seed].result
        epochs = hf.metrics.rows_of(RowType.EPOCH)
        hf_updates = hf.summary["updates"]
        if not epochs or hf_updates == 0:
            continue
        reached = updates_to_reach(ng_runs[seed].result.metrics, epochs[-1]["train_loss"])
        ratios.append(math.inf if reached is None else reached / hf_updates)
    update_ratio = float(np.median(ratios)) if ratios else math.inf
    if update_ratio > UPDATE_BUDGET_FRACTION:
        failures.append(
            f"NG needs {update_ratio:.2f} of HF's updates to reach HF's final training loss "
            f"(limit {UPDATE_BUDGET_FRACTION:.2f})"
        )
    return TrendReport(tuple(failures), update_ratio, ng_accuracy, hf_accuracy)


def rising_updates(
    matrix: MatrixRuns, methods: Sequence[OptimizerMethod | str] = STABLE_METHODS
) -> list[tuple[str, float]]:
    """Updates of *methods* that left the batch loss higher than they found it."""
    names = {str(OptimizerMethod(m)) for m in methods}
    found = []
    for run in matrix.runs:
        if run.method not in names:
            continue
        for row in run.result.metrics.rows_of(RowType.UPDATE):
            rise = row["loss_after"] - row["loss_before"]
            if rise > 0:
                found.append((f"{run.method} seed {run.seed} update {row['update']}", rise))
    return found


def _metrics_without_wall_clock(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        return [{k: v for k, v in row.items() if k not in WALL_CLOCK_COLUMNS} for row in csv.DictReader(fh)]


def replay_mismatches(run: RunConfig, directory: Path) -> list[str]:
    """Train *run* twice into *directory* and name the outputs that differ.

    ``summary.json`` must match byte for byte; ``metrics.csv`` must match
    once the wall-clock column is set aside.
    """
    first, second = Path(directory) / "first", Path(directory) / "second"
    for out in (first, second):
        train(run.replace(output_dir=out))
    mismatches = []
    if _metrics_without_wall_clock(first / "metrics.csv") != _metrics_without_wall_clock(second / "metrics.csv"):
        mismatches.append("metrics.csv")
    if (first / "summary.json").read_bytes() != (second / "summary.json").read_bytes():
        mismatches.append("summary.json")
    for name in ("ce.npz", "final.npz"):
        _, a = load_checkpoint(first / name)
        _, b = load_checkpoint(second / name)
        if not np.array_equal(a, b):
            mismatches.append(name)
    return mismatches


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    header = ["method", "seeds", "aborted", *NUMERIC_KEYS]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.to_mapping().get(k, "") for k in header})
    return buf.getvalue()


def write_comparison(directory: Path, rows: Sequence[ComparisonRow], summaries: Sequence[dict[str, Any]]) -> None:
    directory = Path(directory)
    atomic_write_text(directory / "compare.csv", comparison_csv(rows))
    payload = {"rows": [r.to_mapping() for r in rows], "runs": list(summaries)}
    atomic_write_text(directory / "compare.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
