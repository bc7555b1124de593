"""Orderings that turn feature grids into scan sequences and back."""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from .ssm import SelectiveSSM
from .tensor import ShapeError, as_tensor


class ScanDirection(str, Enum):
    ROW_FORWARD = "row_forward"
    COL_FORWARD = "col_forward"
    ROW_BACKWARD = "row_backward"
    COL_BACKWARD = "col_backward"


DIRECTIONS = tuple(ScanDirection)


class ScanOrder(str, Enum):
    CHANNEL_ONLY = "channel_only"
    SPATIAL_ONLY = "spatial_only"
    PARALLEL = "parallel"
    SPATIAL_THEN_CHANNEL = "spatial_then_channel"
    CHANNEL_THEN_SPATIAL = "channel_then_spatial"


def unfold(x: np.ndarray, direction: ScanDirection) -> np.ndarray:
    """Flatten an ``(h, w, ...)`` grid into an ``(h*w, ...)`` token sequence."""
    x = as_tensor(x)
    direction = ScanDirection(direction)
    h, w = x.shape[:2]
    rest = x.shape[2:]
    if direction in (ScanDirection.COL_FORWARD, ScanDirection.COL_BACKWARD):
        x = x.swapaxes(0, 1)
    seq = x.reshape((h * w,) + rest)
    if direction in (ScanDirection.ROW_BACKWARD, ScanDirection.COL_BACKWARD):
        seq = seq[::-1]
    return np.ascontiguousarray(seq)


def fold(seq: np.ndarray, direction: ScanDirection, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    seq = as_tensor(seq)
    direction = ScanDirection(direction)
    if seq.shape[0] != h * w:
        raise ShapeError(f"sequence length {seq.shape[0]} != h*w = {h * w}")
    rest = seq.shape[1:]
    if direction in (ScanDirection.ROW_BACKWARD, ScanDirection.COL_BACKWARD):
        seq = seq[::-1]
    if direction in (ScanDirection.COL_FORWARD, ScanDirection.COL_BACKWARD):
        return np.ascontiguousarray(seq.reshape((w, h) + rest).swapaxes(0, 1))
    return np.ascontiguousarray(seq.reshape((h, w) + rest))


def cross_scan(x: np.ndarray, ssms: Sequence[SelectiveSSM], parallel: bool = True) -> np.ndarray:
    """Scan an ``(h, w, c)`` grid in all four directions and sum the results.

    ``ssms`` holds one selective SSM per direction, in :data:`DIRECTIONS` order.
    """
    if len(ssms) != 4:
        raise ValueError(f"cross_scan needs 4 parameter sets, got {len(ssms)}")
    x = as_tensor(x)
    h, w = x.shape[:2]
    out = np.zeros(x.shape[:2] + (ssms[0].dim,))
    for direction, ssm in zip(DIRECTIONS, ssms):
        out += fold(ssm(unfold(x, direction), parallel=parallel), direction, h, w)
    return out


def channel_sequence(x: np.ndarray, block: int = 1) -> np.ndarray:
    """View each pixel's channel vector as a sequence.

    Returns shape ``(C // block, h*w, block)``: axis 0 is the scan axis
    (channel index ascending), axis 1 enumerates pixels row-major and the
    last axis holds the token (a scalar when ``block == 1``).
    """
    x = as_tensor(x)
    h, w, c = x.shape
    if block < 1 or c % block:
        raise ShapeError(f"channel count {c} is not divisible by block size {block}")
    seq = x.reshape(h * w, c // block, block).swapaxes(0, 1)
    return np.ascontiguousarray(seq)


def channel_reassemble(seq: np.ndarray, h: int, w: int) -> np.ndarray:
    seq = as_tensor(seq)
    steps, pixels, block = seq.shape
    if pixels != h * w:
        raise ShapeError(f"{pixels} sequences cannot fill a {h}x{w} grid")
    return np.ascontiguousarray(seq.swapaxes(0, 1).reshape(h, w, steps * block))


def channel_scan(
    x: np.ndarray,
    ssm: SelectiveSSM,
    block: int = 1,
    bidirectional: bool = False,
    parallel: bool = True,
) -> np.ndarray:
    """One shared selective SSM run along the channel axis at every pixel."""
    x = as_tensor(x)
    h, w, _ = x.shape
    seq = channel_sequence(x, block)
    out = ssm(seq, parallel=parallel)
    if bidirectional:
        out = out + ssm(seq[::-1], parallel=parallel)[::-1]
    return channel_reassemble(out, h, w)
