"""Feed-forward network with forward, backward and R-operator passes."""

from __future__ import annotations

from ngseq.net.checkpoint import load_checkpoint, save_checkpoint
from ngseq.net.network import (
    ActivationRecord,
    FrameBatch,
    Network,
    backward,
    forward,
    rop,
    rop_transpose,
    theta_digest,
)

__all__ = [
    "ActivationRecord",
    "FrameBatch",
    "Network",
    "backward",
    "forward",
    "load_checkpoint",
    "rop",
    "rop_transpose",
    "save_checkpoint",
    "theta_digest",
]
