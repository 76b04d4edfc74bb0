"""Synthetic task, training loop, property checks and method comparison."""

from __future__ import annotations

from ngseq.harness.compare import (
    ComparisonRow,
    MatrixRuns,
    convergence_trend,
    run_matrix,
    train_matrix,
    write_comparison,
)
from ngseq.harness.metrics import CSV_HEADER, MetricsLog, RowType, SplitEvaluation
from ngseq.harness.presets import DEFAULT_PRESET, available_presets, get_preset
from ngseq.harness.run_config import RunConfig
from ngseq.harness.task import (
    Dataset,
    SyntheticTaskConfig,
    generate_task,
    load_dataset,
    save_dataset,
)
from ngseq.harness.training import TrainingResult, ce_pretrain, evaluate_split, train
from ngseq.harness.verify import CheckResult, available_checks, run_checks

__all__ = [
    "CSV_HEADER",
    "CheckResult",
    "ComparisonRow",
    "DEFAULT_PRESET",
    "Dataset",
    "MatrixRuns",
    "MetricsLog",
    "RowType",
    "RunConfig",
    "SplitEvaluation",
    "SyntheticTaskConfig",
    "TrainingResult",
    "available_checks",
    "available_presets",
    "ce_pretrain",
    "convergence_trend",
    "evaluate_split",
    "generate_task",
    "get_preset",
    "load_dataset",
    "run_checks",
    "run_matrix",
    "save_dataset",
    "train",
    "train_matrix",
    "write_comparison",
]
