"""Reading and writing dense real matrices as CSV or RAWF64 files.

RAWF64 layout: the magic bytes ``CDL1``, two little-endian uint64 values
(rows, cols), then rows*cols little-endian float64 values in column-major
order.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from cohdict.types import ValidationError

MAGIC = b"CDL1"
_HEADER = struct.Struct("<4sQQ")
FORMATS = ("csv", "rawf64")


class MatrixFormatError(ValidationError):
    """A matrix file could not be parsed or is inconsistent."""


def _format(path, fmt):
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "rawf64"
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise ValidationError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")
    return fmt


def load_matrix(path: str | os.PathLike, fmt: str | None = None) -> np.ndarray:
    """Load a finite 2-D float64 matrix.

    ``fmt`` is ``"csv"`` or ``"rawf64"``; when omitted it is guessed from the
    file extension.
    """
    fmt = _format(path, fmt)
    if fmt == "csv":
        with open(path, "r") as fh:
            text = fh.read()
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows:
            raise MatrixFormatError(f"{path}: empty CSV file")
        try:
            m = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise MatrixFormatError(f"{path}: cannot parse CSV: {exc}") from None
    else:
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < _HEADER.size:
            raise MatrixFormatError(f"{path}: truncated RAWF64 header")
        magic, rows, cols = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise MatrixFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = len(blob) - _HEADER.size
        if payload != 8 * rows * cols:
            raise MatrixFormatError(
                f"{path}: header declares {rows}x{cols} but payload holds {payload / 8:g} doubles"
            )
        m = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape((rows, cols), order="F")
        m = m.astype(np.float64)
    if m.size == 0:
        raise MatrixFormatError(f"{path}: empty matrix")
    if not np.all(np.isfinite(m)):
        raise MatrixFormatError(f"{path}: matrix contains non-finite entries")
    return m


def save_matrix(matrix, path: str | os.PathLike, fmt: str | None = None) -> None:
    """Write ``matrix`` (2-D; 1-D input is treated as a column)."""
    fmt = _format(path, fmt)
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.size == 0:
        raise ValidationError(f"cannot save matrix of shape {m.shape}")
    if fmt == "csv":
        with open(path, "w") as fh:
            for row in m:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
            fh.write(np.asarray(m, dtype="<f8").tobytes(order="F"))
