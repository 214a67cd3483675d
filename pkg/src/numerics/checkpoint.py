"""
Versioned checkpoint container.

A checkpoint is a numpy ``.npz`` archive. Parameter and optimizer arrays are
stored under prefixed names with explicit little-endian dtypes; metadata
(format version, config hash, epoch, optimizer scalars, free-form extras) is a
JSON document stored as a byte array under ``__meta__``.
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_PARAM = "param::"
_FIRST = "adam_m::"
_SECOND = "adam_v::"
_META = "__meta__"


@dataclass
class Checkpoint:
    config_hash: str
    epoch: int
    model_state: dict
    optimizer_state: dict = None
    extra: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def _little_endian(array):
    array = np.ascontiguousarray(array)
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(path, checkpoint):
    """
    Write ``checkpoint`` to ``path`` atomically.

    Args:
        path (str or Path): Destination file (``.npz``)
        checkpoint (Checkpoint): What to store
    """
    arrays = {f"{_PARAM}{name}": _little_endian(value) for name, value in checkpoint.model_state.items()}
    optimizer_meta = None
    if checkpoint.optimizer_state is not None:
        opt = checkpoint.optimizer_state
        arrays.update({f"{_FIRST}{k}": _little_endian(v) for k, v in opt["first_moment"].items()})
        arrays.update({f"{_SECOND}{k}": _little_endian(v) for k, v in opt["second_moment"].items()})
        optimizer_meta = {k: v for k, v in opt.items() if k not in ("first_moment", "second_moment")}
    meta = {
        "version": checkpoint.version,
        "config_hash": checkpoint.config_hash,
        "epoch": int(checkpoint.epoch),
        "optimizer": optimizer_meta,
        "extra": checkpoint.extra,
    }
    arrays[_META] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    path = os.fspath(path)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as handle:
        np.savez(handle, **arrays)
    os.replace(tmp_path, path)
    logger.debug("Saved checkpoint %s (epoch %d)", path, checkpoint.epoch)


def load_checkpoint(path):
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        ConfigError: If the container version is not supported
    """
    with np.load(os.fspath(path), allow_pickle=False) as archive:
        meta = json.loads(bytes(archive[_META]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {meta.get('version')} in {path}")
        model_state, first, second = {}, {}, {}
        for key in archive.files:
            if key.startswith(_PARAM):
                model_state[key[len(_PARAM):]] = archive[key]
            elif key.startswith(_FIRST):
                first[key[len(_FIRST):]] = archive[key]
            elif key.startswith(_SECOND):
                second[key[len(_SECOND):]] = archive[key]
    optimizer_state = None
    if meta.get("optimizer") is not None:
        optimizer_state = dict(meta["optimizer"], first_moment=first, second_moment=second)
    return Checkpoint(
        config_hash=meta["config_hash"],
        epoch=meta["epoch"],
        model_state=model_state,
        optimizer_state=optimizer_state,
        extra=meta.get("extra") or {},
        version=meta["version"],
    )
