"""Fully-connected sigmoid network with exact backward and R-operator passes.

Parameter layout of the flat vector θ: layer-major; for each transition the
weight matrix W (fan_out × fan_in, row-major) followed by the bias b
(fan_out). Hidden layers compute σ(W h + b); the output layer is linear.
All arithmetic is float64.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from ngseq.errors import ConfigurationError, NumericError, UsageError


@dataclass(frozen=True)
class Network:
    layer_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(self.layer_dims)
        if len(dims) < 2:
            raise ConfigurationError(f"need at least input and output dims, got {dims}")
        for d in dims:
            if not isinstance(d, (int, np.integer)) or d <= 0:
                raise ConfigurationError(f"layer dims must be positive integers, got {dims}")
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in dims))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_transitions(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def num_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self._fans())

    def _fans(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def layer_slices(self) -> list[slice]:
        """Slice of θ owned by each transition (weights and bias together)."""
        out: list[slice] = []
        offset = 0
        for fan_in, fan_out in self._fans():
            size = (fan_in + 1) * fan_out
            out.append(slice(offset, offset + size))
            offset += size
        return out

    def unpack(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) into θ, one pair per transition."""
        theta = self.check_theta(theta)
        blocks: list[tuple[np.ndarray, np.ndarray]] = []
        for (fan_in, fan_out), sl in zip(self._fans(), self.layer_slices()):
            chunk = theta[sl]
            w = chunk[: fan_in * fan_out].reshape(fan_out, fan_in)
            b = chunk[fan_in * fan_out :]
            blocks.append((w, b))
        return blocks

    def pack(self, blocks: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        if len(blocks) != self.num_transitions:
            raise ConfigurationError(
                f"expected {self.num_transitions} (W, b) pairs, got {len(blocks)}"
            )
        parts: list[np.ndarray] = []
        for (fan_in, fan_out), (w, b) in zip(self._fans(), blocks):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise ConfigurationError(
                    f"block shapes {w.shape}/{b.shape} do not match ({fan_out}, {fan_in})"
                )
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] != self.num_params:
            raise ConfigurationError(
                f"parameter vector has shape {theta.shape}, expected ({self.num_params},)"
            )
        return theta

    def init_parameters(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform Glorot weights in ±sqrt(6/(fan_in+fan_out)), zero biases."""
        blocks = []
        for fan_in, fan_out in self._fans():
            r = np.sqrt(6.0 / (fan_in + fan_out))
            blocks.append((rng.uniform(-r, r, size=(fan_out, fan_in)), np.zeros(fan_out)))
        return self.pack(blocks)


@dataclass(frozen=True)
class FrameBatch:
    frames: np.ndarray
    utterance_id: str = ""

    def __post_init__(self) -> None:
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ConfigurationError(f"frames must be a non-empty T × D matrix, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise NumericError(f"utterance {self.utterance_id!r} has non-finite features")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass(frozen=True)
class ActivationRecord:
    """Everything backward and the R-operator need from one forward pass.

    `inputs[l]` is the input to transition l (the features for l = 0, the
    sigmoid outputs of the previous layer otherwise).
    """

    inputs: tuple[np.ndarray, ...]
    outputs: np.ndarray
    theta_digest: str = field(repr=False)

    @property
    def num_frames(self) -> int:
        return int(self.outputs.shape[0])


def theta_digest(theta: np.ndarray) -> str:
    data = np.ascontiguousarray(theta, dtype=np.float64).tobytes()
    return hashlib.blake2b(data, digest_size=16).hexdigest()


def _frames_of(net: Network, batch: FrameBatch | np.ndarray) -> np.ndarray:
    frames = batch.frames if isinstance(batch, FrameBatch) else np.asarray(batch, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != net.input_dim:
        raise ConfigurationError(
            f"frames have shape {frames.shape}, network expects (T, {net.input_dim})"
        )
    return frames


def _check_record(net: Network, theta: np.ndarray, record: ActivationRecord) -> np.ndarray:
    theta = net.check_theta(theta)
    if theta_digest(theta) != record.theta_digest:
        raise UsageError("activation record was produced under different parameters")
    return theta


def forward(net: Network, theta: np.ndarray, batch: FrameBatch | np.ndarray) -> ActivationRecord:
    """Linear output activations a_t for every frame, plus cached layer inputs."""
    theta = net.check_theta(theta)
    if not np.all(np.isfinite(theta)):
        raise NumericError("parameter vector has non-finite entries")
    h = _frames_of(net, batch)
    inputs: list[np.ndarray] = []
    blocks = net.unpack(theta)
    last = len(blocks) - 1
    for layer, (w, b) in enumerate(blocks):
        inputs.append(h)
        z = h @ w.T + b
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite activation in layer {layer}", layer=layer)
        h = z if layer == last else expit(z)
    return ActivationRecord(inputs=tuple(inputs), outputs=h, theta_digest=theta_digest(theta))


def backward(
    net: Network, theta: np.ndarray, record: ActivationRecord, dF_da: np.ndarray
) -> np.ndarray:
    """Gradient of a criterion w.r.t. θ given its gradient w.r.t. the outputs.

    This is exactly Jᵀ·dF_da, because the criterion depends on θ only
    through the output activations.
    """
    theta = _check_record(net, theta, record)
    delta = np.asarray(dF_da, dtype=np.float64)
    if delta.shape != record.outputs.shape:
        raise UsageError(f"dF/da has shape {delta.shape}, expected {record.outputs.shape}")
    blocks = net.unpack(theta)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(blocks)  # type: ignore[list-item]
    for layer in range(len(blocks) - 1, -1, -1):
        h = record.inputs[layer]
        grads[layer] = (delta.T @ h, delta.sum(axis=0))
        if layer > 0:
            w, _ = blocks[layer]
            delta = (delta @ w) * h * (1.0 - h)
    return net.pack(grads)


def rop(net: Network, theta: np.ndarray, record: ActivationRecord, v: np.ndarray) -> np.ndarray:
    """Directional derivative J·v of the output activations (Pearlmutter R-op)."""
    theta = _check_record(net, theta, record)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != theta.shape:
        raise UsageError(f"direction has shape {v.shape}, expected {theta.shape}")
    blocks = net.unpack(theta)
    v_blocks = net.unpack(v)
    last = len(blocks) - 1
    r_h = np.zeros_like(record.inputs[0])
    r_z = r_h
    for layer, ((w, _), (vw, vb)) in enumerate(zip(blocks, v_blocks)):
        h = record.inputs[layer]
        r_z = r_h @ w.T + h @ vw.T + vb
        if layer < last:
            h_next = record.inputs[layer + 1]
            r_h = r_z * h_next * (1.0 - h_next)
    return r_z


def rop_transpose(
    net: Network, theta: np.ndarray, record: ActivationRecord, u: np.ndarray
) -> np.ndarray:
    """Jᵀ·u; identical to `backward` with dF/da = u."""
    return backward(net, theta, record, u)
