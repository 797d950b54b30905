"""Binary portable graymap (P5) reading and writing.

Only single-channel P5 files are handled. Samples are 8-bit when the maximum
value is below 256 and 16-bit big-endian otherwise, as netpbm prescribes.
"""

from __future__ import annotations

import os
import re

import numpy as np

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


class PgmError(ValueError):
    """Raised for malformed or unsupported graymap files."""


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode P5 bytes into a ``(height, width)`` integer array and its maxval."""
    pos = 0
    header = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PgmError("truncated PGM header")
        header.append(m.group(1))
        pos = m.end()
    if header[0] != b"P5":
        raise PgmError(f"unsupported magic number {header[0]!r}; only P5 is read")
    try:
        width, height, maxval = (int(t) for t in header[1:])
    except ValueError as exc:
        raise PgmError("non-integer PGM header field") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise PgmError(f"invalid PGM geometry {width}x{height} maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raster = data[pos : pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise PgmError("PGM raster shorter than header declares")
    img = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return img.astype(np.int64), maxval


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(img: np.ndarray, maxval: int) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise PgmError("PGM images must be two dimensional")
    if not 0 < maxval < 65536:
        raise PgmError(f"maxval {maxval} outside 1..65535")
    if img.size and (img.min() < 0 or img.max() > maxval):
        raise PgmError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    height, width = img.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + np.ascontiguousarray(img, dtype=dtype).tobytes()


def write_pgm(path: str | os.PathLike, img: np.ndarray, maxval: int = 65535) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, maxval))


def quantize_unit(img: np.ndarray, maxval: int = 65535) -> np.ndarray:
    """Scale a nonnegative image so its maximum maps to ``maxval``, rounding to integers."""
    img = np.asarray(img, dtype=float)
    peak = img.max() if img.size else 0.0
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.int64)
    return np.rint(img / peak * maxval).astype(np.int64)
