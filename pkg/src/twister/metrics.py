"""Referring-segmentation metrics over sets of binary masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

THRESHOLDS = (50, 60, 70, 90)


@dataclass(frozen=True)
class IoUReport:
    miou: float
    oiou: float
    precision: dict[int, float]
    per_image: tuple[float, ...]


def mask_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shape mismatch: {pred.shape} vs {gt.shape}")
    union = np.count_nonzero(pred | gt)
    # two empty masks agree perfectly
    return 1.0 if union == 0 else np.count_nonzero(pred & gt) / union


def iou_metrics(preds, gts, thresholds=THRESHOLDS) -> IoUReport:
    """mIoU (mean per-image IoU), oIoU (summed intersection / summed union), Pr@X.

    Pr@X is the fraction of images whose IoU is strictly greater than X/100.
    """
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equally many (>= 1) predictions and ground-truth masks")
    inter = union = 0
    ious = []
    for p, g in zip(preds, gts):
        ious.append(mask_iou(p, g))
        p = np.asarray(p, dtype=bool)
        g = np.asarray(g, dtype=bool)
        inter += np.count_nonzero(p & g)
        union += np.count_nonzero(p | g)
    ious_arr = np.array(ious)
    return IoUReport(
        miou=float(ious_arr.mean()),
        oiou=1.0 if union == 0 else inter / union,
        precision={x: float(np.mean(ious_arr > x / 100)) for x in thresholds},
        per_image=tuple(ious),
    )
