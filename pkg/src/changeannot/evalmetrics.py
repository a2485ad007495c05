"""Pixel-level change-detection metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ArgumentError


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class Metrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    iou: float


def _as_binary(mask, name: str) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ArgumentError(f"{name} must be binary")
        arr = arr.astype(bool)
    return arr


def confusion(pred, gt) -> Confusion:
    pred = _as_binary(pred, "pred")
    gt = _as_binary(gt, "gt")
    if pred.shape != gt.shape:
        raise ArgumentError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return Confusion(tp, fp, fn, int(pred.size) - tp - fp - fn)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def precision_recall_f1_iou(c: Confusion) -> Metrics:
    """Positive-class precision, recall, F1 and IoU; 0/0 is taken as 0.

    The IoU here is what change-detection tables usually report as "mIoU";
    it satisfies ``iou == f1 / (2 - f1)``.
    """
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    iou = _ratio(c.tp, c.tp + c.fp + c.fn)
    return Metrics(p, r, f1, iou)


def dataset_metrics(mask_pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> Metrics:
    """Micro-average over tiles: pool confusions, then compute ratios once."""
    total = None
    for pred, gt in mask_pairs:
        c = confusion(pred, gt)
        total = c if total is None else total + c
    if total is None:
        raise ArgumentError("dataset_metrics needs at least one (pred, gt) pair")
    return precision_recall_f1_iou(total)
