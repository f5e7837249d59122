"""Single-file tensor container: JSON header + raw little-endian payload.

Layout: magic ``MV3D`` (4 bytes), u32 header length, UTF-8 JSON header,
concatenated tensor payload. The header holds caller metadata plus the key
list with shapes, dtypes, offsets, and per-tensor CRC32 checksums.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"MV3D"

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class ContainerError(Exception):
    """Malformed or unreadable container file."""


class ChecksumError(ContainerError):
    """A tensor's payload failed its CRC32 check."""


def write_container(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            raise ContainerError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        payload = arr.astype(_DTYPES[code], copy=False).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": code,
            "offset": offset,
            "nbytes": len(payload),
            "crc32": zlib.crc32(payload),
        })
        chunks.append(payload)
        offset += len(payload)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise ContainerError(f"{path}: not a tensor container")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + hlen:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8: 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from exc
    payload = raw[8 + hlen:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        chunk = payload[start: start + nbytes]
        if len(chunk) < nbytes:
            raise ContainerError(f"{path}: tensor {entry['name']!r} truncated")
        if zlib.crc32(chunk) != entry["crc32"]:
            raise ChecksumError(f"{path}: tensor {entry['name']!r} failed checksum")
        arr = np.frombuffer(chunk, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return header["meta"], tensors
