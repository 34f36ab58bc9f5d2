"""Shared checkpoint container: named weight arrays plus JSON metadata.

One ``.npz`` file holds every array (model weights, optimizer slots, loss
curves) and a ``__meta__`` entry with UTF-8 JSON. Writes go to a temp file
in the target directory followed by an atomic rename, so a crash never
leaves a partial checkpoint behind. Content hashes cover array bytes and
the metadata minus volatile keys, so identical training runs hash equal.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

META_KEY = "__meta__"

#: metadata keys excluded from content hashing (wall-clock provenance)
VOLATILE_META_KEYS = ("created_at", "train_seconds")


def save_arrays(path: Path | str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Atomically write arrays + metadata to ``path`` (.npz)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(arrays)
    if META_KEY in payload:
        raise ValueError(f"array name {META_KEY!r} is reserved")
    payload[META_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_arrays(path: Path | str) -> tuple[dict[str, np.ndarray], dict]:
    """Load (arrays, metadata) written by :func:`save_arrays`."""
    with np.load(path) as zf:
        arrays = {k: zf[k] for k in zf.files if k != META_KEY}
        meta = json.loads(bytes(zf[META_KEY].tobytes()).decode("utf-8"))
    return arrays, meta


def content_hash(arrays: dict[str, np.ndarray], meta: dict) -> str:
    """Deterministic sha256 over array contents and non-volatile metadata."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        h.update(name.encode("utf-8"))
        h.update(str(arr.dtype).encode("utf-8"))
        h.update(str(arr.shape).encode("utf-8"))
        h.update(arr.tobytes())
    stable_meta = {k: v for k, v in meta.items() if k not in VOLATILE_META_KEYS}
    h.update(json.dumps(stable_meta, sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def file_hash(path: Path | str) -> str:
    """sha256 of raw file bytes (used for images and reports)."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def state_dict_to_arrays(module: torch.nn.Module, prefix: str = "param") -> dict[str, np.ndarray]:
    """Flatten a module state dict into named numpy arrays."""
    return {f"{prefix}::{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def arrays_to_state_dict(arrays: dict[str, np.ndarray], prefix: str = "param") -> dict[str, torch.Tensor]:
    tag = f"{prefix}::"
    return {k[len(tag) :]: torch.from_numpy(np.ascontiguousarray(v)) for k, v in arrays.items() if k.startswith(tag)}


def optimizer_to_arrays(opt: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    """Serialize Adam state (step counters and moment buffers) to arrays."""
    out: dict[str, np.ndarray] = {}
    state = opt.state_dict()["state"]
    for pid, slots in state.items():
        for slot, val in slots.items():
            if isinstance(val, torch.Tensor):
                out[f"opt::{pid}::{slot}"] = val.detach().cpu().numpy().copy()
            else:
                out[f"opt::{pid}::{slot}"] = np.asarray(val)
    return out


def arrays_to_optimizer(arrays: dict[str, np.ndarray], opt: torch.optim.Optimizer) -> None:
    """Restore Adam state saved by :func:`optimizer_to_arrays` into ``opt``."""
    sd = opt.state_dict()
    state: dict[int, dict] = {}
    for name, arr in arrays.items():
        if not name.startswith("opt::"):
            continue
        _, pid, slot = name.split("::", 2)
        entry = state.setdefault(int(pid), {})
        if slot == "step":
            entry[slot] = torch.tensor(float(arr))
        else:
            entry[slot] = torch.from_numpy(np.ascontiguousarray(arr))
    sd["state"] = state
    opt.load_state_dict(sd)
