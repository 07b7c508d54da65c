"""Versioned parameter checkpoints: one .npz holding `<net>/<param>` arrays plus JSON metadata."""
import json
import logging
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from uavwet.common.errors import CheckpointMismatchError
from uavwet.nn.layers import Module

logger_ckpt = logging.getLogger("_CKPT")

FORMAT_VERSION = "uavwet-ckpt-v1"
_META_KEY = "__meta__"


def save_checkpoint(path: Path | str, nets: Mapping[str, Module], meta: Mapping[str, Any]) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        f"{net_name}/{p_name}": p.data
        for net_name, net in nets.items()
        for p_name, p in net.named_parameters().items()
    }
    header = {"format": FORMAT_VERSION, **meta}
    arrays[_META_KEY] = np.array(json.dumps(header, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)
    logger_ckpt.info("[CHECKPOINT SAVED] path=%s tensors=%d", path, len(arrays) - 1)
    return path


def load_checkpoint(path: Path | str) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointMismatchError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        if _META_KEY not in z.files:
            raise CheckpointMismatchError(f"{path} carries no metadata")
        meta = json.loads(str(z[_META_KEY]))
        arrays = {k: z[k].copy() for k in z.files if k != _META_KEY}
    if meta.get("format") != FORMAT_VERSION:
        raise CheckpointMismatchError(f"{path}: format {meta.get('format')!r}, expected {FORMAT_VERSION!r}")
    logger_ckpt.debug("[CHECKPOINT LOADED] path=%s tensors=%d", path, len(arrays))
    return arrays, meta


def restore(nets: Mapping[str, Module], arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
    """Write stored arrays into freshly built nets; shapes must match exactly."""
    for net_name, net in nets.items():
        for p_name, p in net.named_parameters().items():
            key = f"{net_name}/{p_name}"
            if key not in arrays:
                if strict:
                    raise CheckpointMismatchError(f"checkpoint lacks {key}")
                continue
            if arrays[key].shape != p.shape:
                raise CheckpointMismatchError(f"{key}: checkpoint {arrays[key].shape} vs network {p.shape}")
            p.data = arrays[key].astype(np.float64).copy()
