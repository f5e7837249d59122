"""Volume file I/O.

Native format "SMMV" (lossless round-trip), little-endian:

    magic   4 bytes  b"SMMV"
    version u16      1
    kind    u8       0 = intensity, 1 = label
    dtype   u8       0 = float32, 1 = uint16
    D,H,W   3 x u32  volume dims
    C       u32      class count (0 for intensity)
    spacing 3 x f32  mm per voxel
    payload raw voxels, D-major .. W-minor (C order)

Plus a minimal read-only NIfTI-1 importer: uncompressed single-file ``.nii``,
dtypes {uint8, int16, float32}, scl_slope/scl_inter applied when slope is
nonzero. Intensity volumes are min-max normalized to [0, 1] at ingestion.
"""

from __future__ import annotations

import struct

import numpy as np

from .volume import INTENSITY, LABEL, Volume, normalize_intensity


class VolumeIOError(Exception):
    """Base class for volume I/O failures."""

    code = "io"


class BadMagicError(VolumeIOError):
    code = "bad_magic"


class TruncatedFileError(VolumeIOError):
    code = "truncated"


class UnsupportedDtypeError(VolumeIOError):
    code = "unsupported_dtype"


_SMMV_MAGIC = b"SMMV"
_SMMV_HEADER = struct.Struct("<4sHBBIIIIfff")
_SMMV_VERSION = 1

_KIND_CODES = {INTENSITY: 0, LABEL: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u2")}


def write_volume(v: Volume, path) -> None:
    """Write a volume in the native SMMV format."""
    if v.kind == INTENSITY:
        dtype_code, payload = 0, np.ascontiguousarray(v.data, dtype="<f4")
        classes = 0
    else:
        if v.classes > 0xFFFF:
            raise UnsupportedDtypeError(f"label volume with {v.classes} classes exceeds uint16")
        dtype_code, payload = 1, np.ascontiguousarray(v.data, dtype="<u2")
        classes = v.classes
    d, h, w = v.shape
    header = _SMMV_HEADER.pack(
        _SMMV_MAGIC, _SMMV_VERSION, _KIND_CODES[v.kind], dtype_code,
        d, h, w, classes, *v.spacing,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_volume(path) -> Volume:
    """Read an SMMV volume; never returns a partial volume on error."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SMMV_HEADER.size:
        if raw[:4] != _SMMV_MAGIC:
            raise BadMagicError(f"{path}: not an SMMV file")
        raise TruncatedFileError(f"{path}: header truncated")
    magic, version, kind_code, dtype_code, d, h, w, classes, sd, sh, sw = _SMMV_HEADER.unpack_from(raw)
    if magic != _SMMV_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != _SMMV_VERSION:
        raise VolumeIOError(f"{path}: unsupported SMMV version {version}")
    if kind_code not in _KIND_NAMES:
        raise VolumeIOError(f"{path}: unknown kind code {kind_code}")
    if dtype_code not in _DTYPES:
        raise UnsupportedDtypeError(f"{path}: unknown dtype code {dtype_code}")
    dtype = _DTYPES[dtype_code]
    expected = d * h * w * dtype.itemsize
    payload = raw[_SMMV_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload[:expected], dtype=dtype).reshape(d, h, w)
    kind = _KIND_NAMES[kind_code]
    if kind == LABEL:
        data = data.astype(np.int64)
    else:
        data = data.astype(np.float32)
    return Volume(data, kind=kind, spacing=(sd, sh, sw), classes=classes)


# ---------------------------------------------------------------------------
# NIfTI-1 import (read-only, minimal subset)
# ---------------------------------------------------------------------------

_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32}


def _parse_nifti_header(raw: bytes, path) -> tuple[str, dict]:
    if len(raw) < 348:
        raise TruncatedFileError(f"{path}: NIfTI header requires 348 bytes, got {len(raw)}")
    for endian in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(endian + "i", raw, 0)
        if sizeof_hdr == 348:
            break
    else:
        raise BadMagicError(f"{path}: not a NIfTI-1 file (sizeof_hdr != 348)")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise BadMagicError(f"{path}: unsupported NIfTI magic {magic!r} (single-file only)")
    dim = struct.unpack_from(endian + "8h", raw, 40)
    (datatype,) = struct.unpack_from(endian + "h", raw, 70)
    (bitpix,) = struct.unpack_from(endian + "h", raw, 72)
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", raw, 108)
    slope, inter = struct.unpack_from(endian + "2f", raw, 112)
    return endian, {
        "dim": dim, "datatype": datatype, "bitpix": bitpix, "pixdim": pixdim,
        "vox_offset": int(vox_offset), "scl_slope": slope, "scl_inter": inter,
    }


def read_nifti_raw(path, apply_scl: bool = True) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a NIfTI-1 volume as scaled (but unnormalized) float64 values.

    Returns ``(data, spacing)`` with data indexed (D, H, W) = (dim3, dim2,
    dim1) and scl_slope/scl_inter already applied when slope is nonzero.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    endian, hdr = _parse_nifti_header(raw, path)
    ndim = hdr["dim"][0]
    if ndim < 3 or any(d != 1 for d in hdr["dim"][4: 1 + ndim]):
        raise VolumeIOError(f"{path}: expected a 3-D NIfTI volume, dim={hdr['dim']}")
    if hdr["datatype"] not in _NIFTI_DTYPES:
        raise UnsupportedDtypeError(
            f"{path}: NIfTI datatype {hdr['datatype']} unsupported "
            f"(supported codes: {sorted(_NIFTI_DTYPES)})"
        )
    nx, ny, nz = hdr["dim"][1], hdr["dim"][2], hdr["dim"][3]
    dtype = np.dtype(_NIFTI_DTYPES[hdr["datatype"]]).newbyteorder(endian)
    offset = max(hdr["vox_offset"], 348)
    expected = nx * ny * nz * dtype.itemsize
    payload = raw[offset: offset + expected]
    if len(payload) < expected:
        raise TruncatedFileError(f"{path}: voxel payload truncated")
    # NIfTI stores x fastest; (D, H, W) := (z, y, x).
    data = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx).astype(np.float64)
    if apply_scl and hdr["scl_slope"] != 0.0:
        data = data * hdr["scl_slope"] + hdr["scl_inter"]
    spacing = tuple(abs(s) or 1.0 for s in (hdr["pixdim"][3], hdr["pixdim"][2], hdr["pixdim"][1]))
    return data, spacing  # type: ignore[return-value]


def read_nifti(path, kind: str = INTENSITY) -> Volume:
    """Import a NIfTI-1 volume.

    Intensity volumes are min-max normalized to [0, 1]; label volumes must
    hold integral values (scl scaling is ignored for labels).
    """
    if kind == INTENSITY:
        data, spacing = read_nifti_raw(path)
        return Volume(normalize_intensity(data), kind=INTENSITY, spacing=spacing)
    data, spacing = read_nifti_raw(path, apply_scl=False)
    if not np.allclose(data, np.round(data)):
        raise VolumeIOError(f"{path}: non-integral values in a label import")
    return Volume(data.astype(np.int64), kind=LABEL, spacing=spacing)
