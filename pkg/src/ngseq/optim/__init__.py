"""CG solver and the SGD, HF, DSAG-HF and natural-gradient updates."""

from __future__ import annotations

from ngseq.optim.cg import CGConfig, CGInit, CGResult, cg_solve, quadratic_model
from ngseq.optim.config import (
    METHOD_KEYS,
    OptimizerConfig,
    OptimizerMethod,
    OptimizerState,
    UpdateRecord,
)
from ngseq.optim.diagnostics import EigenDiagnostic, eigen_diagnostic
from ngseq.optim.objective import Evaluation, Objective, QuadraticObjective, SequenceObjective
from ngseq.optim.updates import (
    OPTIMIZER_REGISTRY,
    available_methods,
    clip_per_layer,
    dsag_hf_update,
    get_optimizer,
    hf_update,
    ng_update,
    register_optimizer,
    sgd_update,
)

__all__ = [
    "CGConfig",
    "CGInit",
    "CGResult",
    "EigenDiagnostic",
    "Evaluation",
    "METHOD_KEYS",
    "OPTIMIZER_REGISTRY",
    "Objective",
    "OptimizerConfig",
    "OptimizerMethod",
    "OptimizerState",
    "QuadraticObjective",
    "SequenceObjective",
    "UpdateRecord",
    "available_methods",
    "cg_solve",
    "clip_per_layer",
    "dsag_hf_update",
    "eigen_diagnostic",
    "get_optimizer",
    "hf_update",
    "ng_update",
    "quadratic_model",
    "register_optimizer",
    "sgd_update",
]
