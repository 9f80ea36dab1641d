"""Single-file model container: JSON manifest plus aligned float32 tensor blobs.

Layout: 8-byte magic, uint64 little-endian manifest length, UTF-8 JSON
manifest, then little-endian float32 blobs. Blob offsets are relative to the
blob base (the first 64-byte boundary after the manifest) and each is 64-byte
aligned. Loading is atomic: any parse or length error raises before a model
object exists.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GDQC0001"
ALIGN = 64


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def save_container(path, kind: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write named float32 tensors plus a metadata dict to a container file."""
    entries = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "f32"}
        )
        blobs.append(arr.tobytes())
        offset = _align(offset + arr.nbytes)
    manifest = json.dumps(
        {"kind": kind, "meta": meta, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    header = MAGIC + struct.pack("<Q", len(manifest))
    blob_base = _align(len(header) + len(manifest))
    out = bytearray(header + manifest)
    for entry, blob in zip(entries, blobs):
        start = blob_base + entry["offset"]
        out.extend(b"\x00" * (start - len(out)))
        out.extend(blob)
    Path(path).write_bytes(bytes(out))


def load_container(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Read a container file back into (kind, meta, {name: float32 array})."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad model container magic")
    (manifest_len,) = struct.unpack_from("<Q", data, len(MAGIC))
    header_len = len(MAGIC) + 8
    manifest_bytes = data[header_len:header_len + manifest_len]
    if len(manifest_bytes) != manifest_len:
        raise ValueError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: unreadable manifest ({exc})") from exc
    blob_base = _align(header_len + manifest_len)
    tensors = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        if entry.get("dtype") != "f32":
            raise ValueError(f"{path}: tensor {name!r} has unsupported dtype {entry.get('dtype')}")
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = blob_base + int(entry["offset"])
        end = start + count * 4
        if end > len(data):
            raise ValueError(f"{path}: truncated blob for tensor {name!r}")
        tensors[name] = np.frombuffer(data[start:end], dtype="<f4").reshape(shape).copy()
    return manifest["kind"], manifest["meta"], tensors
