"""Optimizer configuration, mutable optimizer state and update records."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Mapping

import numpy as np

from ngseq.curvature import FisherKappa, HessianMode
from ngseq.errors import ConfigurationError
from ngseq.optim.cg import CGConfig, CGInit


class OptimizerMethod(StrEnum):
    SGD = "sgd"
    HF = "hf"
    DSAG_HF = "dsag_hf"
    NG = "ng"


_SECOND_ORDER_KEYS = frozenset(
    {
        "damping",
        "damping_min",
        "damping_max",
        "batch_fraction",
        "curvature_fraction",
        "curvature_minimum",
        "backtracking",
        "max_backtracks",
    }
)

METHOD_KEYS: dict[OptimizerMethod, frozenset[str]] = {
    OptimizerMethod.SGD: frozenset({"learning_rate", "clip_threshold", "batch_size"}),
    OptimizerMethod.HF: _SECOND_ORDER_KEYS | {"hessian_mode"},
    OptimizerMethod.DSAG_HF: _SECOND_ORDER_KEYS | {"hessian_mode", "blend_weight"},
    OptimizerMethod.NG: _SECOND_ORDER_KEYS | {"fisher_floor", "fisher_kappa"},
}

_CG_DEFAULTS: dict[OptimizerMethod, dict[str, Any]] = {
    OptimizerMethod.SGD: {},
    OptimizerMethod.HF: {"max_iters": 5, "init": CGInit.GRADIENT},
    OptimizerMethod.DSAG_HF: {"max_iters": 5, "init": CGInit.BLENDED},
    OptimizerMethod.NG: {"max_iters": 8, "init": CGInit.GRADIENT},
}


@dataclass(frozen=True)
class OptimizerConfig:
    method: OptimizerMethod
    learning_rate: float = 1e-4
    clip_threshold: float = 1.0
    batch_size: int = 4
    damping: float = 1.0
    damping_min: float = 1e-6
    damping_max: float = 1e6
    batch_fraction: float = 0.25
    curvature_fraction: float = 0.01
    curvature_minimum: int = 4
    backtracking: bool = True
    max_backtracks: int = 3
    hessian_mode: HessianMode = HessianMode.PSD
    blend_weight: float = 0.5
    fisher_floor: float = 1e-8
    fisher_kappa: FisherKappa = FisherKappa.CRITERION
    cg: CGConfig = field(default_factory=CGConfig)

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "method", OptimizerMethod(self.method))
            object.__setattr__(self, "hessian_mode", HessianMode(self.hessian_mode))
            object.__setattr__(self, "fisher_kappa", FisherKappa(self.fisher_kappa))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        positive = {
            "learning_rate": self.learning_rate,
            "clip_threshold": self.clip_threshold,
            "batch_size": self.batch_size,
            "damping": self.damping,
            "damping_min": self.damping_min,
            "damping_max": self.damping_max,
            "curvature_minimum": self.curvature_minimum,
            "fisher_floor": self.fisher_floor,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigurationError(f"optimizer {name} must be positive, got {value}")
        for name in ("batch_fraction", "curvature_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigurationError(f"optimizer {name} must be in (0, 1], got {value}")
        if not self.damping_min <= self.damping <= self.damping_max:
            raise ConfigurationError(
                f"damping {self.damping} outside [{self.damping_min}, {self.damping_max}]"
            )
        if self.max_backtracks < 0:
            raise ConfigurationError(f"max_backtracks must be ≥ 0, got {self.max_backtracks}")
        if not 0.0 <= self.blend_weight <= 1.0:
            raise ConfigurationError(f"blend_weight must be in [0, 1], got {self.blend_weight}")

    @property
    def is_second_order(self) -> bool:
        return self.method is not OptimizerMethod.SGD

    @classmethod
    def from_mapping(
        cls,
        method: OptimizerMethod | str,
        data: Mapping[str, Any] | None = None,
        cg: Mapping[str, Any] | None = None,
    ) -> "OptimizerConfig":
        """Build a config for *method*, rejecting keys that do not apply to it."""
        try:
            method = OptimizerMethod(method)
        except ValueError:
            raise ConfigurationError(
                f"unknown optimizer {method!r}; choose from {[m.value for m in OptimizerMethod]}"
            ) from None
        data = dict(data or {})
        data.pop("method", None)
        stray = set(data) - METHOD_KEYS[method]
        if stray:
            raise ConfigurationError(f"keys {sorted(stray)} do not apply to optimizer {method}")
        if cg and method is OptimizerMethod.SGD:
            raise ConfigurationError("[cg] settings do not apply to optimizer sgd")
        cg_cfg = CGConfig.from_mapping(cg or {}, **_CG_DEFAULTS[method])
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if types[key] in ("int",):
                kwargs[key] = int(value)
            elif types[key] in ("float",):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(method=method, cg=cg_cfg, **kwargs)

    def to_mapping(self) -> dict[str, Any]:
        keys = METHOD_KEYS[self.method]
        out: dict[str, Any] = {"method": str(self.method)}
        for key in sorted(keys):
            value = getattr(self, key)
            out[key] = str(value) if isinstance(value, StrEnum) else value
        return out


@dataclass
class OptimizerState:
    """Mutable state carried across updates; owned by one training loop."""

    damping: float
    rng: np.random.Generator
    blend: np.ndarray | None = None
    update_index: int = 0

    @classmethod
    def initial(cls, cfg: OptimizerConfig, rng: np.random.Generator) -> "OptimizerState":
        return cls(damping=cfg.damping, rng=rng)

    def reset_epoch(self) -> None:
        self.blend = None


@dataclass(frozen=True)
class UpdateRecord:
    index: int
    method: str
    loss_before: float
    loss_after: float
    step_norm: float
    damping: float
    cg_iterations: int
    wall_clock: float
    num_utterances: int = 0
    accepted: bool = True
    backtracks: int = 0
    rho: float | None = None
    skipped: bool = False
    gradient_evaluations: int = 0
    curvature_products: int = 0
