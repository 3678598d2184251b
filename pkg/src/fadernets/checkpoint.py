"""Single-file checkpoint container: JSON manifest + float32 tensor blob.

Layout: 8-byte magic, big-endian u64 manifest length, UTF-8 manifest JSON,
then the blob of little-endian float32 values, row-major, in manifest index
order.  The checkpoint id is a content hash over config + blob, so
identical training runs produce identical ids.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import FaderNetModel, ModelConfig

MAGIC = b"FDRSCKP1"
MANIFEST_VERSION = 1


def _prior_means_summary(model: FaderNetModel) -> dict | None:
    if model.prior is None:
        return None
    d = model.config.reg_dim
    summary: dict[str, list[dict]] = {}
    for f, means in model.prior.means.items():
        summary[f] = [
            {
                "component": k,
                "zd": float(means.data[k, d]),
                "norm": float(np.linalg.norm(means.data[k])),
            }
            for k in range(model.config.n_clusters)
        ]
    return summary


def save_checkpoint(model: FaderNetModel, path: str | Path) -> str:
    """Write the model to path; returns the checkpoint id."""
    chunks: list[bytes] = []
    index: list[dict] = []
    offset = 0
    for p in model.parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        index.append({"name": p.name, "shape": list(p.data.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)

    config = model.config.to_dict()
    digest = hashlib.sha256()
    digest.update(json.dumps(config, sort_keys=True).encode("utf-8"))
    digest.update(blob)
    checkpoint_id = digest.hexdigest()[:16]

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "checkpoint_id": checkpoint_id,
        "config": config,
        "seed": model.seed,
        "zd_ranges": model.zd_ranges,
        "prior_means_summary": _prior_means_summary(model),
        "tensors": index,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = MAGIC + struct.pack(">Q", len(manifest_bytes)) + manifest_bytes + blob

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
    return checkpoint_id


def load_checkpoint(path: str | Path) -> tuple[FaderNetModel, str]:
    """Rebuild the model from a checkpoint file; returns (model, checkpoint id)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (manifest_len,) = struct.unpack(">Q", data[8:16])
    manifest = json.loads(data[16 : 16 + manifest_len].decode("utf-8"))
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ValueError("unsupported checkpoint manifest version")
    blob = data[16 + manifest_len :]

    config = ModelConfig.from_dict(manifest["config"])
    model = FaderNetModel(config, seed=manifest["seed"])
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        param = model.parameter(entry["name"])
        if tuple(param.data.shape) != shape:
            raise ValueError(f"tensor {entry['name']} shape mismatch")
        param.data = values.reshape(shape).astype(model.dtype)
    if manifest["zd_ranges"] is not None:
        model.zd_ranges = {
            f: (float(lo), float(hi)) for f, (lo, hi) in manifest["zd_ranges"].items()
        }
    return model, manifest["checkpoint_id"]
