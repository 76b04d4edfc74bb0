"""The resolved description of one training run."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ngseq.errors import ConfigurationError
from ngseq.harness.task import SyntheticTaskConfig
from ngseq.lattice.criteria import CriterionKind
from ngseq.optim.config import OptimizerConfig, OptimizerMethod

SEQUENCE_CRITERIA = (CriterionKind.MMI, CriterionKind.MPE, CriterionKind.SMBR)


@dataclass(frozen=True)
class RunConfig:
    task: SyntheticTaskConfig = field(default_factory=SyntheticTaskConfig)
    hidden: tuple[int, ...] = (32, 32)
    criterion: CriterionKind = CriterionKind.MPE
    kappa: float = 0.5
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(method=OptimizerMethod.NG)
    )
    epochs: int = 8
    ce_epochs: int = 5
    ce_learning_rate: float = 0.5
    ce_batch_size: int = 8
    use_priors: bool = True
    seed: int = 0
    workers: int = 1
    output_dir: Path | None = None
    telemetry_endpoint: str = ""
    telemetry_headers: str = ""
    debug: bool = False
    log_file: Path | None = None

    def __post_init__(self) -> None:
        try:
            criterion = CriterionKind(self.criterion)
        except ValueError:
            raise ConfigurationError(f"unknown criterion {self.criterion!r}") from None
        if criterion not in SEQUENCE_CRITERIA:
            raise ConfigurationError(
                f"training criterion must be one of {[str(c) for c in SEQUENCE_CRITERIA]}"
            )
        object.__setattr__(self, "criterion", criterion)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigurationError(f"hidden layer sizes must be positive, got {self.hidden}")
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigurationError(f"kappa must be in (0, 1], got {self.kappa}")
        for name in ("epochs", "ce_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be ≥ 0")
        if self.ce_learning_rate <= 0 or self.ce_batch_size < 1 or self.workers < 1:
            raise ConfigurationError("ce_learning_rate, ce_batch_size and workers must be positive")
        if self.output_dir is not None:
            object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.log_file is not None:
            object.__setattr__(self, "log_file", Path(self.log_file))

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.task.feature_dim, *self.hidden, self.task.num_states)

    @property
    def method(self) -> OptimizerMethod:
        return self.optimizer.method

    def updates_per_epoch(self) -> int:
        if self.optimizer.is_second_order:
            return max(1, math.ceil(1.0 / self.optimizer.batch_fraction))
        return max(1, math.ceil(self.task.num_train / self.optimizer.batch_size))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)
