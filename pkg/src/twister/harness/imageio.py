"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header fields, skipping ``#`` comments."""
    fields = []
    i = 0
    while len(fields) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i >= len(data):
            raise ImageFormatError("truncated header")
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        fields.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return fields, i + 1


def _read(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    (tag, w, h, maxval), start = _tokens(data, 4)
    if tag != magic:
        raise ImageFormatError(f"{path}: bad magic {tag!r}, expected {magic!r}")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed header") from None
    if maxval != 255 or w < 1 or h < 1:
        raise ImageFormatError(f"{path}: only 8-bit images with positive size are supported")
    n = w * h * channels
    raster = np.frombuffer(data, dtype=np.uint8, count=n, offset=start) if len(data) - start >= n else None
    if raster is None:
        raise ImageFormatError(f"{path}: expected {n} raster bytes, found {len(data) - start}")
    return raster.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path: str | Path) -> np.ndarray:
    """Return an ``(H, W, 3)`` uint8 array."""
    return _read(path, b"P6", 3)


def read_pgm(path: str | Path) -> np.ndarray:
    return _read(path, b"P5", 1)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes())


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes())


def normalize_gray(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant map becomes uniform 128."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
