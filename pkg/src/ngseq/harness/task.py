"""Synthetic frame-classification task with confusable lattices.

Every utterance is a Markov chain of state segments. Frames are noisy
Gaussian-bump prototypes of their state. The denominator lattice has a node
at every segment boundary; each segment contributes its reference arc and,
with probability `confusion`, one competing arc labelled with another
state (or, for half of those, a competitor that keeps the reference label
for the first half of the segment).
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ngseq.errors import ConfigurationError, DataError
from ngseq.file_io import atomic_write, atomic_write_text
from ngseq.lattice.io import read_lattice, write_lattice
from ngseq.lattice.model import Arc, Lattice, Reference, UtteranceExample
from ngseq.net.network import FrameBatch

logger = logging.getLogger(__name__)

DATASET_FORMAT = "ngseq-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class SyntheticTaskConfig:
    num_states: int = 12
    num_symbols: int = 6
    feature_dim: int = 8
    min_length: int = 20
    max_length: int = 40
    num_train: int = 256
    num_validation: int = 64
    confusion: float = 0.5
    seed: int = 0
    min_segment: int = 2
    max_segment: int = 6
    noise: float = 0.8
    bump_width: float = 1.0
    max_paths: int = 1000

    def __post_init__(self) -> None:
        positive = (
            "num_states", "num_symbols", "feature_dim", "min_length", "max_length",
            "num_train", "num_validation", "min_segment", "max_segment", "max_paths",
        )
        for name in positive:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"task {name} must be a positive integer, got {value}")
        if self.num_states < 2:
            raise ConfigurationError("task needs at least two states")
        if self.num_symbols > self.num_states:
            raise ConfigurationError("task cannot have more symbols than states")
        if self.min_length > self.max_length or self.min_segment > self.max_segment:
            raise ConfigurationError("task length/segment ranges are empty")
        if self.min_segment > self.min_length:
            raise ConfigurationError("min_segment exceeds min_length")
        if not 0.0 <= self.confusion <= 1.0:
            raise ConfigurationError(f"task confusion must be in [0, 1], got {self.confusion}")
        if self.noise < 0 or self.bump_width <= 0:
            raise ConfigurationError("task noise must be ≥ 0 and bump_width > 0")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SyntheticTaskConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise ConfigurationError(f"unknown [task] keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = float(value) if fields[key].type == "float" else int(value)
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Dataset:
    config: SyntheticTaskConfig
    train: tuple[UtteranceExample, ...]
    validation: tuple[UtteranceExample, ...]
    symbol_map: np.ndarray
    log_priors: np.ndarray

    @property
    def num_states(self) -> int:
        return self.config.num_states

    def mean_paths(self) -> float:
        counts = [u.denominator.count_paths() for u in self.train + self.validation]
        return float(np.mean(counts))


def symbol_map_for(cfg: SyntheticTaskConfig) -> np.ndarray:
    """State → symbol; consecutive states share a symbol like HMM sub-states."""
    return (np.arange(cfg.num_states) * cfg.num_symbols) // cfg.num_states


def state_prototypes(cfg: SyntheticTaskConfig) -> np.ndarray:
    """num_states × feature_dim bump prototypes, centres spread over the feature axis."""
    centres = np.linspace(0.0, cfg.feature_dim - 1, cfg.num_states)
    k = np.arange(cfg.feature_dim)
    bumps = np.exp(-((k[None, :] - centres[:, None]) ** 2) / (2.0 * cfg.bump_width**2))
    # alternate the sign of odd states so neighbouring bumps stay distinguishable
    signs = np.where(np.arange(cfg.num_states) % 2 == 0, 1.0, -1.0)
    return 2.0 * bumps * signs[:, None]


def transition_matrix(cfg: SyntheticTaskConfig, rng: np.random.Generator) -> np.ndarray:
    """Random state-to-state chain without self transitions."""
    trans = rng.dirichlet(np.ones(cfg.num_states), size=cfg.num_states)
    np.fill_diagonal(trans, 0.0)
    return trans / trans.sum(axis=1, keepdims=True)


def _segments(cfg: SyntheticTaskConfig, rng: np.random.Generator, length: int) -> list[int]:
    sizes: list[int] = []
    remaining = length
    while remaining > 0:
        size = int(rng.integers(cfg.min_segment, cfg.max_segment + 1))
        if remaining - size < cfg.min_segment:
            size = remaining
        sizes.append(size)
        remaining -= size
    return sizes


def _utterance(
    utterance_id: str,
    cfg: SyntheticTaskConfig,
    rng: np.random.Generator,
    prototypes: np.ndarray,
    trans: np.ndarray,
    symbol_map: np.ndarray,
) -> UtteranceExample:
    length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
    sizes = _segments(cfg, rng, length)
    log_trans = np.log(np.where(trans > 0, trans, 1e-12))

    states: list[int] = []
    previous = int(rng.integers(cfg.num_states))
    times = [0]
    arcs: list[Arc] = []
    numerator: list[int] = []
    paths = 1
    for k, size in enumerate(sizes):
        state = int(rng.choice(cfg.num_states, p=trans[previous]))
        weight = float(log_trans[previous, state])
        src, dst = k, k + 1
        times.append(times[-1] + size)
        numerator.append(len(arcs))
        arcs.append(Arc(src, dst, (state,) * size, weight))
        if rng.random() < cfg.confusion and paths * 2 <= cfg.max_paths:
            rival = int(rng.integers(cfg.num_states - 1))
            rival += rival >= state
            keep = size // 2 if rng.random() < 0.5 else 0
            labels = (state,) * keep + (rival,) * (size - keep)
            arcs.append(Arc(src, dst, labels, float(log_trans[previous, rival])))
            paths *= 2
        states.extend([state] * size)
        previous = state

    frames = prototypes[states] + cfg.noise * rng.standard_normal((length, cfg.feature_dim))
    lattice = Lattice(tuple(times), tuple(arcs), 0, len(sizes))
    return UtteranceExample.build(
        utterance_id,
        FrameBatch(frames, utterance_id),
        Reference.from_states(states, symbol_map),
        lattice,
        numerator,
    )


def estimate_log_priors(utterances: tuple[UtteranceExample, ...], num_states: int) -> np.ndarray:
    counts = np.ones(num_states)
    for utt in utterances:
        counts += np.bincount(np.asarray(utt.reference.states), minlength=num_states)
    return np.log(counts / counts.sum())


def generate_task(cfg: SyntheticTaskConfig) -> Dataset:
    """Training and validation utterances drawn from independent seed streams."""
    chain_seed, train_seed, valid_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    trans = transition_matrix(cfg, np.random.default_rng(chain_seed))
    prototypes = state_prototypes(cfg)
    symbol_map = symbol_map_for(cfg)

    train_rng = np.random.default_rng(train_seed)
    train = tuple(
        _utterance(f"train-{i:04d}", cfg, train_rng, prototypes, trans, symbol_map)
        for i in range(cfg.num_train)
    )
    valid_rng = np.random.default_rng(valid_seed)
    validation = tuple(
        _utterance(f"valid-{i:04d}", cfg, valid_rng, prototypes, trans, symbol_map)
        for i in range(cfg.num_validation)
    )
    dataset = Dataset(cfg, train, validation, symbol_map, estimate_log_priors(train, cfg.num_states))
    logger.info(
        "Generated task: %d train / %d validation utterances, seed %d",
        len(train), len(validation), cfg.seed,
    )
    return dataset


def _features_bytes(utt: UtteranceExample) -> bytes:
    buf = io.BytesIO()
    np.savez(
        buf,
        frames=utt.frames.frames,
        states=np.asarray(utt.reference.states, dtype=np.int64),
        numerator_arcs=np.asarray(utt.numerator_arcs, dtype=np.int64),
    )
    return buf.getvalue()


def save_dataset(dataset: Dataset, directory: Path) -> Path:
    """Write manifest.json plus one .lat and one .npz per utterance."""
    directory = Path(directory)
    entries = []
    for split, utts in (("train", dataset.train), ("validation", dataset.validation)):
        for utt in utts:
            write_lattice(utt.denominator, directory / f"{utt.utterance_id}.lat")
            atomic_write(directory / f"{utt.utterance_id}.npz", _features_bytes(utt))
            entries.append({"id": utt.utterance_id, "split": split})
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "task": dataset.config.to_mapping(),
        "symbol_map": dataset.symbol_map.tolist(),
        "log_priors": dataset.log_priors.tolist(),
        "utterances": entries,
    }
    path = directory / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    logger.info("Wrote dataset with %d utterances to %s", len(entries), directory)
    return path


def load_dataset(directory: Path) -> Dataset:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset manifest in {directory}: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise DataError(f"{directory}: unsupported dataset format")
    cfg = SyntheticTaskConfig.from_mapping(manifest["task"])
    symbol_map = np.asarray(manifest["symbol_map"], dtype=np.int64)
    splits: dict[str, list[UtteranceExample]] = {"train": [], "validation": []}
    for entry in manifest["utterances"]:
        uid = entry["id"]
        lattice = read_lattice(directory / f"{uid}.lat")
        try:
            with np.load(directory / f"{uid}.npz", allow_pickle=False) as data:
                frames = np.array(data["frames"])
                states = [int(s) for s in data["states"]]
                numerator = [int(a) for a in data["numerator_arcs"]]
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"cannot read features for {uid}: {exc}") from None
        utt = UtteranceExample.build(
            uid,
            FrameBatch(frames, uid),
            Reference.from_states(states, symbol_map),
            lattice,
            numerator,
        )
        splits[entry["split"]].append(utt)
    return Dataset(
        cfg,
        tuple(splits["train"]),
        tuple(splits["validation"]),
        symbol_map,
        np.asarray(manifest["log_priors"], dtype=np.float64),
    )
