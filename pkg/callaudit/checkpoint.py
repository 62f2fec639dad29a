"""
Checkpoint container.

A checkpoint is an uncompressed ZIP archive with fixed timestamps and sorted
entries, so saving the same weights twice produces identical bytes::

    meta.json                 format version, model config, vocabulary, shapes,
                              optimizer hyperparameters and step
    params/<name>.npy         one array per parameter (NPY v1, little-endian)
    buffers/<name>.npy        running statistics
    optim/m/<name>.npy        AdamW first moments
    optim/v/<name>.npy        AdamW second moments
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from .config import ModelConfig
from .exceptions import IncompatibleCheckpoint
from .optim import OptimizerState
from .version import CHECKPOINT_FORMAT_VERSION

_FIXED_DATE_TIME = (1980, 1, 1, 0, 0, 0)
_META = "meta.json"


@dataclass(eq=False)
class Checkpoint:
    """Everything needed to rebuild a trained classifier and resume its optimizer."""

    config: ModelConfig
    vocab_labels: list[str]
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer: OptimizerState | None = None
    epoch: int = 0
    best_f1: float = 0.0

    def to_bytes(self) -> bytes:
        return write_archive(self._entries())

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())

    def digest(self) -> str:
        """SHA-256 of the serialized container."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def _entries(self) -> dict[str, bytes]:
        entries: dict[str, bytes] = {}
        for name, array in self.params.items():
            entries[f"params/{name}.npy"] = encode_array(array)
        for name, array in self.buffers.items():
            entries[f"buffers/{name}.npy"] = encode_array(array)
        optimizer_meta: dict[str, Any] | None = None
        if self.optimizer is not None:
            state = self.optimizer
            for name, array in state.m.items():
                entries[f"optim/m/{name}.npy"] = encode_array(array)
            for name, array in state.v.items():
                entries[f"optim/v/{name}.npy"] = encode_array(array)
            optimizer_meta = {
                "lr": state.lr,
                "betas": list(state.betas),
                "eps": state.eps,
                "weight_decay": state.weight_decay,
                "step": state.step,
            }
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": self.config.model_dump(mode="json"),
            "vocab_labels": self.vocab_labels,
            "shapes": {name: list(array.shape) for name, array in self.params.items()},
            "optimizer": optimizer_meta,
            "epoch": self.epoch,
            "best_f1": self.best_f1,
        }
        entries[_META] = json.dumps(meta, sort_keys=True, indent=2).encode("utf-8")
        return entries


def write_archive(entries: dict[str, bytes]) -> bytes:
    """Uncompressed ZIP of `entries` in name order with fixed timestamps."""
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as zf:
        for name, payload in sorted(entries.items()):
            info = zipfile.ZipInfo(name, date_time=_FIXED_DATE_TIME)
            info.compress_type = zipfile.ZIP_STORED
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)
    return buffer.getvalue()


def encode_array(array: np.ndarray) -> bytes:
    out = io.BytesIO()
    little = np.asarray(array, dtype=array.dtype.newbyteorder("<"), order="C")
    np.lib.format.write_array(out, little, version=(1, 0), allow_pickle=False)
    return out.getvalue()


def decode_array(payload: bytes, name: str) -> np.ndarray:
    try:
        return np.lib.format.read_array(io.BytesIO(payload), allow_pickle=False)
    except ValueError as e:
        raise IncompatibleCheckpoint(f"entry {name} is not a valid array: {e}") from e


def _collect(zf: zipfile.ZipFile, prefix: str) -> dict[str, np.ndarray]:
    found: dict[str, np.ndarray] = {}
    for entry in zf.namelist():
        if entry.startswith(prefix) and entry.endswith(".npy"):
            name = entry[len(prefix) : -len(".npy")]
            found[name] = decode_array(zf.read(entry), entry)
    return found


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    """
    Reads a checkpoint container.

    :raises IncompatibleCheckpoint: when the container is damaged, of another
        format version, or its metadata does not match the stored arrays
    """
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as e:
        raise IncompatibleCheckpoint(f"not a checkpoint container: {e}") from e
    with zf:
        if _META not in zf.namelist():
            raise IncompatibleCheckpoint("checkpoint has no meta.json")
        try:
            meta = json.loads(zf.read(_META))
        except json.JSONDecodeError as e:
            raise IncompatibleCheckpoint(f"meta.json is not valid JSON: {e}") from e
        version = meta.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise IncompatibleCheckpoint(
                f"checkpoint format version {version}, "
                f"this build reads version {CHECKPOINT_FORMAT_VERSION}"
            )
        try:
            config = ModelConfig.model_validate(meta["config"])
        except (KeyError, ValidationError) as e:
            raise IncompatibleCheckpoint(f"checkpoint config is invalid: {e}") from e
        params = _collect(zf, "params/")
        for name, shape in meta.get("shapes", {}).items():
            if name not in params or list(params[name].shape) != shape:
                raise IncompatibleCheckpoint(f"parameter {name} is missing or mis-shaped")
        optimizer: OptimizerState | None = None
        if meta.get("optimizer") is not None:
            hyper = meta["optimizer"]
            optimizer = OptimizerState(
                lr=float(hyper["lr"]),
                betas=(float(hyper["betas"][0]), float(hyper["betas"][1])),
                eps=float(hyper["eps"]),
                weight_decay=float(hyper["weight_decay"]),
                step=int(hyper["step"]),
                m=_collect(zf, "optim/m/"),
                v=_collect(zf, "optim/v/"),
            )
        return Checkpoint(
            config=config,
            vocab_labels=list(meta.get("vocab_labels", [])),
            params=params,
            buffers=_collect(zf, "buffers/"),
            optimizer=optimizer,
            epoch=int(meta.get("epoch", 0)),
            best_f1=float(meta.get("best_f1", 0.0)),
        )


def load_checkpoint(path: Path) -> Checkpoint:
    """
    :raises IncompatibleCheckpoint: when the file is missing or unreadable
    """
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IncompatibleCheckpoint(f"cannot read checkpoint {path}: {e}") from e
    return checkpoint_from_bytes(data)
