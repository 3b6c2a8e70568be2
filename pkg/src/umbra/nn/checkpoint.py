"""Flat parameter checkpoints.

Layout: 8-byte little-endian uint64 header length, UTF-8 JSON header, then
one contiguous block of little-endian float32 data. The header lists tensor
names, shapes, and byte offsets into the data block, sorted by name, so the
file is byte-reproducible for a given parameter set.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch


def save_checkpoint(path, named_params, extra=None):
    """Write {name: tensor} to `path`; `extra` is an optional JSON-able dict
    stored in the header (e.g. training step, config)."""
    records = []
    blobs = []
    offset = 0
    for name in sorted(named_params):
        tensor = named_params[name]
        data = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        records.append({"name": name, "shape": list(data.shape), "offset": offset})
        raw = data.tobytes()
        blobs.append(raw)
        offset += len(raw)
    header = {"tensors": records}
    if extra is not None:
        header["extra"] = extra
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    return path


def load_checkpoint(path, dtype=torch.float32):
    """Read a checkpoint; returns ({name: tensor}, extra)."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"checkpoint too short: {path}")
    (head_len,) = struct.unpack("<Q", raw[:8])
    if 8 + head_len > len(raw):
        raise ValueError(f"checkpoint header length {head_len} exceeds file: {path}")
    header = json.loads(raw[8 : 8 + head_len].decode("utf-8"))
    data = raw[8 + head_len :]
    out = {}
    for rec in header["tensors"]:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = rec["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        out[rec["name"]] = torch.from_numpy(arr.copy().reshape(shape)).to(dtype)
    return out, header.get("extra")
