"""Named starting points for run configs, in the same layout as the TOML file.

A preset sits between the built-in defaults and the config file in the
merge order, so a config file or flag can still override any key.
"""

from __future__ import annotations

import copy
from typing import Any

from ngseq.errors import ConfigurationError

DEFAULT_PRESET = "desk"

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    # 8-32-32-12 network, 256 training utterances, 4 updates per epoch
    "desk": {},
    # half the data per epoch, two large-batch updates
    "small-data": {
        "task": {"num_train": 128, "num_validation": 32},
        "optimizer": {"batch_fraction": 0.5},
        "training": {"epochs": 12},
    },
    # small enough for the dense oracles
    "tiny": {
        "task": {
            "num_states": 4,
            "num_symbols": 2,
            "feature_dim": 3,
            "min_length": 6,
            "max_length": 10,
            "num_train": 16,
            "num_validation": 8,
            "min_segment": 2,
            "max_segment": 3,
            "confusion": 0.7,
            "max_paths": 64,
        },
        "network": {"hidden": [4]},
        "training": {"epochs": 3, "ce_epochs": 3, "ce_batch_size": 4},
        "optimizer": {"curvature_minimum": 2},
    },
}


def available_presets() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict[str, dict[str, Any]]:
    if name not in PRESETS:
        raise ConfigurationError(f"Unknown preset: {name}. Available: {available_presets()}")
    return copy.deepcopy(PRESETS[name])
