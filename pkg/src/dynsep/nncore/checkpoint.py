"""Single-file binary checkpoints.

Layout: 8-byte magic, uint32 header length, UTF-8 JSON header (format
version plus per-tensor name/shape metadata), then the concatenated
little-endian float32 parameter blob. Byte-stable across platforms.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"DYNSEP01"
FORMAT_VERSION = 1


def save_checkpoint(path, module: torch.nn.Module, meta: dict | None = None) -> None:
    entries = []
    blobs = []
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": entries,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path, module: torch.nn.Module) -> dict:
    """Load parameters into `module`; returns the header metadata."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a dynsep checkpoint")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    offset = 12 + hlen
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += count * 4
        state[entry["name"]] = torch.from_numpy(arr.copy())
    module.load_state_dict(state)
    return header["meta"]
