"""RVOL binary volume format.

Layout: magic b"RVOL", 4-byte little-endian header length, UTF-8 JSON
header {dims, spacing, dtype, order}, then the raw payload. Volumes use
dtype "f32le", masks "u8" with values {0, 1}; order is always
"x-fastest" (Fortran order for [x, y, z] indexed arrays).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import Mask3D, Volume3D

MAGIC = b"RVOL"


class RvolFormatError(ValueError):
    """Malformed RVOL file."""


def _encode(data: np.ndarray, spacing, dtype: str) -> bytes:
    header = {
        "dims": [int(n) for n in data.shape],
        "spacing": [float(s) for s in spacing],
        "dtype": dtype,
        "order": "x-fastest",
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    payload = data.ravel(order="F").tobytes()
    return MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + payload


def _write(path, data: np.ndarray, spacing, dtype: str) -> None:
    Path(path).write_bytes(_encode(data, spacing, dtype))


def _decode(raw: bytes, path="<bytes>"):
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise RvolFormatError(f"{path}: missing RVOL magic")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise RvolFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RvolFormatError(f"{path}: bad header JSON: {exc}") from exc
    try:
        dims = tuple(int(n) for n in header["dims"])
        spacing = tuple(float(s) for s in header["spacing"])
        dtype = header["dtype"]
        order = header["order"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RvolFormatError(f"{path}: incomplete header: {exc}") from exc
    if order != "x-fastest":
        raise RvolFormatError(f"{path}: unsupported order {order!r}")
    if dtype == "f32le":
        np_dtype = np.dtype("<f4")
    elif dtype == "u8":
        np_dtype = np.dtype("u1")
    else:
        raise RvolFormatError(f"{path}: unsupported dtype {dtype!r}")
    payload = raw[8 + header_len :]
    expected = int(np.prod(dims)) * np_dtype.itemsize
    if len(payload) != expected:
        raise RvolFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=np_dtype).reshape(dims, order="F")
    return data, spacing, dtype


def _read(path):
    return _decode(Path(path).read_bytes(), path)


def volume_to_bytes(volume: Volume3D) -> bytes:
    return _encode(volume.data.astype("<f4"), volume.spacing, "f32le")


def mask_to_bytes(mask: Mask3D) -> bytes:
    return _encode(mask.data.astype("u1"), mask.spacing, "u8")


def volume_from_bytes(raw: bytes) -> Volume3D:
    data, spacing, dtype = _decode(raw)
    if dtype != "f32le":
        raise RvolFormatError(f"expected a volume (f32le), got {dtype}")
    return Volume3D(data=np.asarray(data, dtype=np.float64), spacing=spacing)


def mask_from_bytes(raw: bytes) -> Mask3D:
    data, spacing, dtype = _decode(raw)
    if dtype != "u8":
        raise RvolFormatError(f"expected a mask (u8), got {dtype}")
    if not np.all((data == 0) | (data == 1)):
        raise RvolFormatError("mask payload has values outside {0,1}")
    return Mask3D(data=data.astype(bool), spacing=spacing)


def save_volume(path, volume: Volume3D) -> None:
    _write(path, volume.data.astype("<f4"), volume.spacing, "f32le")


def save_mask(path, mask: Mask3D) -> None:
    _write(path, mask.data.astype("u1"), mask.spacing, "u8")


def load_volume(path) -> Volume3D:
    data, spacing, dtype = _read(path)
    if dtype != "f32le":
        raise RvolFormatError(f"{path}: expected a volume (f32le), got {dtype}")
    return Volume3D(data=np.asarray(data, dtype=np.float64), spacing=spacing)


def load_mask(path) -> Mask3D:
    data, spacing, dtype = _read(path)
    if dtype != "u8":
        raise RvolFormatError(f"{path}: expected a mask (u8), got {dtype}")
    if not np.all((data == 0) | (data == 1)):
        raise RvolFormatError(f"{path}: mask payload has values outside {{0,1}}")
    return Mask3D(data=data.astype(bool), spacing=spacing)
