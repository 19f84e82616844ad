"""Minimal reader/writer for the feature exchange payload format.

The on-disk layout is NPY version 1.0 restricted to little-endian float32,
C row-major order, 2-D shape (see ``docs/feature-format.md`` for the full
byte-level description). Writing always emits a 64-byte-aligned header, so
a given matrix serializes to the same bytes on every run; reading accepts
any conforming v1.0 file regardless of header padding.
"""

from __future__ import annotations

import ast
import struct
from pathlib import Path

import numpy as np

from .errors import IOFormatError, ValidationError

MAGIC = b"\x93NUMPY"
_VERSION = bytes([1, 0])
_HEADER_ALIGN = 64


def header_bytes(n_rows: int, n_cols: int) -> bytes:
    """Serialize the fixed header for an ``n_rows x n_cols`` float32 matrix."""
    dict_str = (
        "{'descr': '<f4', 'fortran_order': False, "
        f"'shape': ({n_rows}, {n_cols}), }}"
    )
    # magic(6) + version(2) + header-length field(2) + dict + padding + '\n',
    # padded with spaces so the total is a multiple of 64.
    unpadded = len(MAGIC) + 2 + 2 + len(dict_str) + 1
    total = -(-unpadded // _HEADER_ALIGN) * _HEADER_ALIGN
    header = dict_str + " " * (total - unpadded) + "\n"
    return MAGIC + _VERSION + struct.pack("<H", len(header)) + header.encode("latin1")


def write_matrix(data: np.ndarray, path: Path) -> None:
    """Write a 2-D float array as a little-endian float32 NPY v1.0 file."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"feature payload must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(header_bytes(arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_matrix(path: Path) -> np.ndarray:
    """Read a feature payload file, enforcing the exchange-format contract.

    Raises ``IOFormatError`` on any structural problem: bad magic or version,
    unparseable header, wrong dtype/order/dimensionality, or a payload whose
    byte count disagrees with the declared shape.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IOFormatError(f"cannot read feature file {path}: {exc}") from exc

    if len(raw) < 10 or raw[:6] != MAGIC:
        raise IOFormatError(f"{path}: not a feature payload file (bad magic)")
    if raw[6:8] != _VERSION:
        raise IOFormatError(
            f"{path}: unsupported format version {raw[6]}.{raw[7]}, expected 1.0"
        )
    (header_len,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + header_len:
        raise IOFormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10 : 10 + header_len].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise IOFormatError(f"{path}: malformed header dict: {exc}") from exc

    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise IOFormatError(f"{path}: header keys {sorted(header)} do not match format")
    if header["descr"] != "<f4":
        raise IOFormatError(f"{path}: dtype {header['descr']!r} is not '<f4'")
    if header["fortran_order"] is not False:
        raise IOFormatError(f"{path}: fortran_order must be False")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) != 2
        or not all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise IOFormatError(f"{path}: shape {shape!r} is not a 2-D shape")

    payload = raw[10 + header_len :]
    expected = shape[0] * shape[1] * 4
    if len(payload) != expected:
        raise IOFormatError(
            f"{path}: payload has {len(payload)} bytes, shape {shape} implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
