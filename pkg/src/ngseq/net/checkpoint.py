"""Versioned network checkpoints.

Container: a NumPy ``.npz`` archive with the keys

- ``format``: the string ``"ngseq-checkpoint"``
- ``version``: integer format version (currently 1)
- ``layer_dims``: int64 vector (D_in, hidden..., D_out)
- ``theta``: float64 flat parameter vector in the layout of `Network`
"""

from __future__ import annotations

import io
import logging
from pathlib import Path

import numpy as np

from ngseq.errors import DataError
from ngseq.file_io import atomic_write
from ngseq.net.network import Network

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ngseq-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: Path, net: Network, theta: np.ndarray) -> None:
    theta = net.check_theta(theta)
    buf = io.BytesIO()
    np.savez(
        buf,
        format=np.array(CHECKPOINT_FORMAT),
        version=np.array(CHECKPOINT_VERSION, dtype=np.int64),
        layer_dims=np.array(net.layer_dims, dtype=np.int64),
        theta=theta,
    )
    atomic_write(path, buf.getvalue())
    logger.debug("Wrote checkpoint %s (%d parameters)", path, net.num_params)


def load_checkpoint(path: Path) -> tuple[Network, np.ndarray]:
    try:
        with np.load(path, allow_pickle=False) as data:
            fmt = str(data["format"])
            version = int(data["version"])
            dims = tuple(int(d) for d in data["layer_dims"])
            theta = np.array(data["theta"], dtype=np.float64)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if fmt != CHECKPOINT_FORMAT or version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint {fmt!r} version {version}")
    net = Network(dims)
    if theta.shape != (net.num_params,):
        raise DataError(f"{path}: parameter vector does not match layer dims {dims}")
    return net, theta
