"""Exception hierarchy shared by every ngseq module."""

from __future__ import annotations

from typing import Any


class NgseqError(Exception):
    """Base class for all errors raised by ngseq."""


class ConfigurationError(NgseqError):
    """Invalid shapes, config values or config keys."""


class UsageError(NgseqError):
    """API misuse: stale records, oracle size guards, empty batches."""


class DataError(NgseqError):
    """Inconsistent lattices, references or dataset files."""


class NumericError(NgseqError):
    """Non-finite values in a computation."""

    def __init__(self, message: str, *, layer: int | None = None) -> None:
        super().__init__(message)
        self.layer = layer


class CGAbort(NumericError):
    """Conjugate gradient met a direction with non-positive curvature."""

    def __init__(self, curvature: float, iteration: int) -> None:
        super().__init__(
            f"non-positive curvature pᵀBp={curvature:.3e} at CG iteration {iteration}"
        )
        self.curvature = curvature
        self.iteration = iteration


class TrainingAborted(NgseqError):
    """Training stopped early; `metrics` holds the rows logged so far."""

    def __init__(self, message: str, metrics: Any = None) -> None:
        super().__init__(message)
        self.metrics = metrics
