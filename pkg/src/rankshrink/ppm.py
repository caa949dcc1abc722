"""Minimal binary PPM (P6, 8-bit) reader and writer."""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedFormat


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments between header tokens
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 image into an (height, width, 3) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic != b"P6":
        raise UnsupportedFormat(
            f"{path}: expected binary PPM (P6), got magic {magic!r}"
        )
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    try:
        w, h, mv = int(width), int(height), int(maxval)
    except ValueError:
        raise UnsupportedFormat(f"{path}: malformed PPM header")
    if mv != 255:
        raise UnsupportedFormat(f"{path}: only 8-bit PPM supported, maxval={mv}")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    if pixels.size != w * h * 3:
        raise UnsupportedFormat(f"{path}: truncated pixel data")
    return pixels.reshape(h, w, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    """Write an (height, width, 3) uint8 array as binary P6."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise UnsupportedFormat("write_ppm requires an (h, w, 3) uint8 array")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
