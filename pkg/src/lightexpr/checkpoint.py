"""Self-describing checkpoint container.

Layout::

    b"LXCKPT01" | uint64 LE header length | JSON header | raw tensor bytes

The header carries the format version, the network descriptor, step
counter, config hash, free-form metadata, and an index of named tensors
(dtype, shape, byte offset). Optimizer state is stored as tensors under the
``optim/`` prefix plus a JSON skeleton in the header.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .errors import CheckpointError
from .nets import build_network

MAGIC = b"LXCKPT01"
FORMAT_VERSION = 1


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _pack_state(obj, prefix, tensors):
    """Replace tensors in a nested optimizer state with references."""
    if isinstance(obj, torch.Tensor):
        tensors[prefix] = obj.detach().cpu().numpy()
        return {"__tensor__": prefix}
    if isinstance(obj, dict):
        return {"__dict__": [[_pack_key(k), _pack_state(v, f"{prefix}/{k}", tensors)] for k, v in obj.items()]}
    if isinstance(obj, (list, tuple)):
        return [_pack_state(v, f"{prefix}/{i}", tensors) for i, v in enumerate(obj)]
    return obj


def _pack_key(k):
    return {"int": k} if isinstance(k, int) else k


def _unpack_state(obj, tensors):
    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return torch.from_numpy(tensors[obj["__tensor__"]].copy())
        if "__dict__" in obj:
            out = {}
            for k, v in obj["__dict__"]:
                key = k["int"] if isinstance(k, dict) else k
                out[key] = _unpack_state(v, tensors)
            return out
        return obj
    if isinstance(obj, list):
        return [_unpack_state(v, tensors) for v in obj]
    return obj


@dataclass
class NetworkCheckpoint:
    architecture: dict
    params: dict
    optimizer_state: Optional[dict] = None
    step: int = 0
    config_hash: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.architecture["kind"]

    @classmethod
    def from_module(cls, module, optimizer=None, step=0, config_hash=None, meta=None):
        params = {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}
        opt = optimizer.state_dict() if optimizer is not None else None
        return cls(module.descriptor(), params, opt, int(step), config_hash, dict(meta or {}))

    def build(self):
        """Instantiate the network and load parameters; evaluation mode."""
        try:
            module = build_network(self.architecture)
            state = {k: torch.from_numpy(np.array(v)) for k, v in self.params.items()}
            module.load_state_dict(state, strict=True)
        except (RuntimeError, TypeError, KeyError) as exc:
            raise CheckpointError(f"checkpoint does not match its architecture: {exc}") from None
        module.eval()
        return module

    def save(self, path) -> None:
        tensors = {f"param/{k}": v for k, v in self.params.items()}
        opt_skeleton = None
        if self.optimizer_state is not None:
            opt_skeleton = _pack_state(self.optimizer_state, "optim", tensors)
        index, offset, blobs = {}, 0, []
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            raw = arr.tobytes()
            index[name] = {"dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset,
                           "nbytes": len(raw)}
            blobs.append(raw)
            offset += len(raw)
        header = {
            "version": FORMAT_VERSION,
            "architecture": self.architecture,
            "step": self.step,
            "config_hash": self.config_hash,
            "meta": self.meta,
            "optimizer": opt_skeleton,
            "tensors": index,
        }
        head = json.dumps(header, sort_keys=True).encode()
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(head)))
            fh.write(head)
            for raw in blobs:
                fh.write(raw)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "NetworkCheckpoint":
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        if data[:8] != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack("<Q", data[8:16])
        try:
            header = json.loads(data[16:16 + hlen])
        except ValueError:
            raise CheckpointError(f"{path}: corrupt header") from None
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
        body = memoryview(data)[16 + hlen:]
        tensors = {}
        for name, info in header["tensors"].items():
            raw = body[info["offset"]:info["offset"] + info["nbytes"]]
            tensors[name] = np.frombuffer(raw, dtype=np.dtype(info["dtype"])).reshape(info["shape"]).copy()
        params = {k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")}
        opt = _unpack_state(header["optimizer"], tensors) if header["optimizer"] is not None else None
        return cls(header["architecture"], params, opt, header["step"], header["config_hash"],
                   header.get("meta", {}))


def save_module(path, module, optimizer=None, step=0, config_hash=None, meta=None) -> NetworkCheckpoint:
    ckpt = NetworkCheckpoint.from_module(module, optimizer, step, config_hash, meta)
    ckpt.save(path)
    return ckpt


def load_module(path, expected_kind: Optional[str] = None):
    ckpt = NetworkCheckpoint.load(path)
    if expected_kind is not None and ckpt.kind != expected_kind:
        raise CheckpointError(f"{path} holds a {ckpt.kind} network, expected {expected_kind}")
    return ckpt.build(), ckpt


def parameter_digest(module) -> str:
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
