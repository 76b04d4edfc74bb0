"""ngseq run configuration.

Config file: TOML with the sections [task], [network], [training],
[optimizer], [cg], [telemetry] and [logging].

Merge order: built-in defaults → preset → config file → environment
variables → CLI flags (highest priority). Sections merge key by key.
"""

from __future__ import annotations

import logging
import os
import tomllib
from pathlib import Path
from typing import Any, Dict, Mapping

import tomli_w

from ngseq.errors import ConfigurationError
from ngseq.file_io import atomic_write
from ngseq.harness.presets import DEFAULT_PRESET, get_preset
from ngseq.harness.run_config import RunConfig
from ngseq.harness.task import SyntheticTaskConfig
from ngseq.optim.config import METHOD_KEYS, OptimizerConfig, OptimizerMethod

logger = logging.getLogger(__name__)

SECTIONS = ("task", "network", "training", "optimizer", "cg", "telemetry", "logging")

_TRAINING_KEYS = {
    "criterion": str,
    "kappa": float,
    "epochs": int,
    "ce_epochs": int,
    "ce_learning_rate": float,
    "ce_batch_size": int,
    "use_priors": bool,
    "seed": int,
    "workers": int,
    "output_dir": str,
}
_NETWORK_KEYS = {"hidden"}
_TELEMETRY_KEYS = {"endpoint", "headers"}
_LOGGING_KEYS = {"debug", "log_file"}

# Mapping: (section, key) → env var name
_ENV_OVERRIDES: list[tuple[str, str, str]] = [
    ("task", "seed", "NGSEQ_SEED"),
    ("training", "seed", "NGSEQ_SEED"),
    ("training", "output_dir", "NGSEQ_OUT"),
    ("training", "workers", "NGSEQ_WORKERS"),
    ("logging", "debug", "NGSEQ_DEBUG"),
    ("telemetry", "endpoint", "OTEL_EXPORTER_OTLP_ENDPOINT"),
    ("telemetry", "headers", "OTEL_EXPORTER_OTLP_HEADERS"),
]
_INT_ENV = {"seed", "workers"}


def _read_toml(path: Path) -> Dict[str, Any]:
    try:
        with Path(path).open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None


def merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Section-wise merge: *override* wins key by key inside each section."""
    merged: Dict[str, Any] = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = {**merged[k], **v}
        else:
            merged[k] = v
    return merged


def _apply_env_overrides(merged: Dict[str, Any]) -> None:
    """Environment variables override the preset and the config file."""
    for section, key, env_var in _ENV_OVERRIDES:
        val = os.environ.get(env_var)
        if not val:
            continue
        target = merged.setdefault(section, {})
        if key in _INT_ENV:
            try:
                target[key] = int(val)
            except ValueError:
                logger.warning("Invalid %s value %r; ignoring", env_var, val)
        elif key == "debug":
            target[key] = val.lower() == "true"
        else:
            target[key] = val


def _check_keys(section: str, data: Mapping[str, Any], known: set[str] | frozenset[str]) -> None:
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown [{section}] keys: {sorted(unknown)}")


def run_config_from_mapping(data: Mapping[str, Any], *, preset_optimizer: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a merged section mapping and build the `RunConfig`.

    *preset_optimizer* holds preset-supplied optimizer keys; those that do not
    apply to the chosen method are dropped instead of rejected.
    """
    _check_keys("config", data, set(SECTIONS))
    for section in SECTIONS:
        if not isinstance(data.get(section, {}), Mapping):
            raise ConfigurationError(f"[{section}] must be a table")

    training = dict(data.get("training", {}))
    _check_keys("training", training, set(_TRAINING_KEYS))
    network = dict(data.get("network", {}))
    _check_keys("network", network, _NETWORK_KEYS)
    telemetry = dict(data.get("telemetry", {}))
    _check_keys("telemetry", telemetry, _TELEMETRY_KEYS)
    logging_cfg = dict(data.get("logging", {}))
    _check_keys("logging", logging_cfg, _LOGGING_KEYS)

    optimizer = dict(data.get("optimizer", {}))
    method = optimizer.pop("method", str(OptimizerMethod.NG))
    try:
        method = OptimizerMethod(method)
    except ValueError:
        raise ConfigurationError(
            f"unknown optimizer {method!r}; choose from {[m.value for m in OptimizerMethod]}"
        ) from None
    for key, value in (preset_optimizer or {}).items():
        if key in METHOD_KEYS[method]:
            optimizer.setdefault(key, value)

    kwargs: dict[str, Any] = {}
    for key, value in training.items():
        caster = _TRAINING_KEYS[key]
        try:
            kwargs[key] = value if caster is bool else caster(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"[training] {key} has an invalid value {value!r}") from None
    if kwargs.get("output_dir"):
        kwargs["output_dir"] = Path(kwargs["output_dir"])
    else:
        kwargs.pop("output_dir", None)
    if "hidden" in network:
        kwargs["hidden"] = tuple(network["hidden"])

    log_file = logging_cfg.get("log_file")
    return RunConfig(
        task=SyntheticTaskConfig.from_mapping(data.get("task", {})),
        optimizer=OptimizerConfig.from_mapping(method, optimizer, data.get("cg")),
        telemetry_endpoint=str(telemetry.get("endpoint", "")),
        telemetry_headers=str(telemetry.get("headers", "")),
        debug=bool(logging_cfg.get("debug", False)),
        log_file=Path(log_file) if log_file else None,
        **kwargs,
    )


def load_run_config(
    path: Path | None = None,
    *,
    preset: str = DEFAULT_PRESET,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Load merged config: preset → file → env vars → *overrides*."""
    preset_data = get_preset(preset)
    preset_optimizer = preset_data.pop("optimizer", {})
    merged: Dict[str, Any] = merge({}, preset_data)
    if path is not None:
        merged = merge(merged, _read_toml(path))
    _apply_env_overrides(merged)
    if overrides:
        merged = merge(merged, overrides)
    return run_config_from_mapping(merged, preset_optimizer=preset_optimizer)


def run_config_to_mapping(cfg: RunConfig) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "task": cfg.task.to_mapping(),
        "network": {"hidden": list(cfg.hidden)},
        "training": {
            "criterion": str(cfg.criterion),
            "kappa": cfg.kappa,
            "epochs": cfg.epochs,
            "ce_epochs": cfg.ce_epochs,
            "ce_learning_rate": cfg.ce_learning_rate,
            "ce_batch_size": cfg.ce_batch_size,
            "use_priors": cfg.use_priors,
            "seed": cfg.seed,
            "workers": cfg.workers,
        },
        "optimizer": cfg.optimizer.to_mapping(),
        "logging": {"debug": cfg.debug},
    }
    if cfg.optimizer.is_second_order:
        data["cg"] = {
            "max_iters": cfg.optimizer.cg.max_iters,
            "residual_tol": cfg.optimizer.cg.residual_tol,
            "init": str(cfg.optimizer.cg.init),
        }
    if cfg.output_dir is not None:
        data["training"]["output_dir"] = str(cfg.output_dir)
    if cfg.log_file is not None:
        data["logging"]["log_file"] = str(cfg.log_file)
    if cfg.telemetry_endpoint:
        # headers carry credentials and stay out of the snapshot
        data["telemetry"] = {"endpoint": cfg.telemetry_endpoint}
    return data


def save_run_config(cfg: RunConfig, path: Path) -> None:
    """Write the resolved configuration as TOML."""
    atomic_write(Path(path), tomli_w.dumps(run_config_to_mapping(cfg)).encode("utf-8"))
