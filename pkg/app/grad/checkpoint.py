"""Parameter checkpoints: JSON manifest plus one little-endian float32 blob."""

import json
import logging
import os
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from app.errors import CheckpointError
from app.grad.tensor import Tensor

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
BLOB = "params.f32"
_LE_F32 = np.dtype("<f4")


def save_checkpoint(directory: str, params: Sequence[Tuple[str, Tensor]], metadata: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(directory, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, p in params:
        data = np.ascontiguousarray(p.data, dtype=_LE_F32).reshape(-1)
        entries.append({"name": name, "shape": list(p.data.shape), "offset": offset})
        chunks.append(data)
        offset += data.size
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype=_LE_F32)

    manifest = {"tensors": entries, "total": int(offset), "metadata": metadata or {}}
    tmp_blob = os.path.join(directory, BLOB + ".tmp")
    with open(tmp_blob, "wb") as f:
        f.write(blob.tobytes())
    os.replace(tmp_blob, os.path.join(directory, BLOB))
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info(f"Checkpoint written to {directory} ({len(entries)} tensors, {offset} values)")
    return directory


def read_checkpoint(directory: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    manifest_path = os.path.join(directory, MANIFEST)
    blob_path = os.path.join(directory, BLOB)
    if not (os.path.exists(manifest_path) and os.path.exists(blob_path)):
        raise CheckpointError(f"no checkpoint found in {directory}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        entries = manifest["tensors"]
    except (json.JSONDecodeError, KeyError) as e:
        raise CheckpointError(f"malformed checkpoint manifest in {directory}: {str(e)}") from e

    blob = np.fromfile(blob_path, dtype=_LE_F32)
    expected = sum(int(np.prod(e["shape"])) for e in entries)
    if blob.size != expected:
        raise CheckpointError(f"checkpoint blob holds {blob.size} values, manifest expects {expected}")

    tensors = {}
    for e in entries:
        n = int(np.prod(e["shape"]))
        start = int(e["offset"])
        if start + n > blob.size:
            raise CheckpointError(f"tensor {e['name']} runs past the end of the blob")
        tensors[e["name"]] = blob[start : start + n].reshape(e["shape"]).astype(np.float32)
    return tensors, manifest.get("metadata", {})


def load_into(directory: str, params: Sequence[Tuple[str, Tensor]]) -> Dict[str, Any]:
    """Overwrite ``params`` in place from a checkpoint; names and shapes must match exactly."""
    tensors, metadata = read_checkpoint(directory)
    names = [name for name, _ in params]
    if sorted(names) != sorted(tensors):
        missing = sorted(set(names) - set(tensors))
        extra = sorted(set(tensors) - set(names))
        raise CheckpointError(f"checkpoint does not match model: missing {missing}, unexpected {extra}")
    for name, p in params:
        if tensors[name].shape != p.data.shape:
            raise CheckpointError(f"tensor {name} has shape {tensors[name].shape}, model expects {p.data.shape}")
        p.data = tensors[name].copy()
    logger.info(f"Loaded checkpoint from {directory}")
    return metadata
