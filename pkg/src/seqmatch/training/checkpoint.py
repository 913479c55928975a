"""Binary checkpoint: magic line, JSON header, raw little-endian float64 tensors, sha256 trailer."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import TrainingConfig
from ..core import AdamState, Tensor
from ..model.embedding import FeatureVocab
from ..model.sdm import SDMModel

MAGIC = b"SEQMATCH-CHECKPOINT\n"
CHECKPOINT_VERSION = 1
_DIGEST = 32


class CheckpointError(ValueError):
    """Unreadable or damaged checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


@dataclass
class Checkpoint:
    model: SDMModel
    optimizer: Optional[AdamState] = None
    metadata: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return self.model.config.config_hash()


def _tensor_entries(ckpt: Checkpoint):
    for name, p in ckpt.model.params.items():
        yield f"param/{name}", p.data
    opt = ckpt.optimizer
    if opt is not None:
        for name in sorted(opt.m):
            yield f"adam_m/{name}", opt.m[name]
            yield f"adam_v/{name}", opt.v[name]


def encode_checkpoint(ckpt: Checkpoint, version: int = CHECKPOINT_VERSION) -> bytes:
    model = ckpt.model
    entries, blobs, offset = [], [], 0
    for name, arr in _tensor_entries(ckpt):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "version": version,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "profile_features": list(model.profile_features_declared),
        "vocab": model.vocab.to_json(),
        "tensors": entries,
        "optimizer": None
        if ckpt.optimizer is None
        else {k: getattr(ckpt.optimizer, k) for k in ("lr", "beta1", "beta2", "eps", "t")},
        "metadata": ckpt.metadata,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    body = MAGIC + head + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    data = encode_checkpoint(ckpt)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def decode_checkpoint(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < len(MAGIC) + _DIGEST + 2:
        raise CheckpointError("checkpoint file truncated")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (truncated or corrupt file)")
    nl = body.find(b"\n", len(MAGIC))
    if nl < 0:
        raise CheckpointError("checkpoint header missing")
    try:
        header = json.loads(body[len(MAGIC) : nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint header unreadable: {exc}") from None
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {version} not supported (expected {CHECKPOINT_VERSION})")
    payload = body[nl + 1 :]
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        start = entry["offset"]
        if start + n > len(payload):
            raise CheckpointError(f"tensor {entry['name']} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=n // 8, offset=start).reshape(shape).astype(np.float64)
    config = TrainingConfig.from_dict(header["config"])
    vocab = FeatureVocab.from_json(header["vocab"])
    params = {k[len("param/") :]: Tensor(v) for k, v in arrays.items() if k.startswith("param/")}
    model = SDMModel(config, vocab, tuple(header["profile_features"]), params=params)
    opt = None
    if header.get("optimizer") is not None:
        opt = AdamState(**header["optimizer"])
        for k, v in arrays.items():
            if k.startswith("adam_m/"):
                opt.m[k[len("adam_m/") :]] = v
            elif k.startswith("adam_v/"):
                opt.v[k[len("adam_v/") :]] = v
    return Checkpoint(model, opt, header.get("metadata", {}))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
