"""Pixel-level segmentation metrics with lane as the positive class.

Degenerate ratios are pinned: a 0/0 ratio is reported as 0 and flagged, except
a class IoU where the class is absent from both masks, which is reported as 1
(vacuous agreement) and flagged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

METRIC_NAMES = ("miou", "accuracy", "precision", "recall", "f1", "specificity")
TABLE_HEADERS = ("mIoU", "Accuracy", "Precision", "Recall", "F1 Score", "Specificity")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricsReport:
    miou: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    lane_iou: float
    background_iou: float
    undefined: frozenset[str] = frozenset()
    mode: str = "single"
    excluded: dict[str, int] = field(default_factory=dict)

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in METRIC_NAMES)

    def csv_header(self) -> str:
        return ",".join(METRIC_NAMES + ("mode", "undefined"))

    def csv_row(self) -> str:
        vals = ",".join(f"{v:.6f}" for v in self.values())
        return f"{vals},{self.mode},{';'.join(sorted(self.undefined))}"

    def table(self) -> str:
        """Aligned plain-text block in published column order."""
        widths = [max(len(h), 8) for h in TABLE_HEADERS]
        head = "  ".join(h.rjust(w) for h, w in zip(TABLE_HEADERS, widths))
        row = "  ".join(f"{v:.4f}".rjust(w) for v, w in zip(self.values(), widths))
        lines = [head, row, f"aggregation: {self.mode}"]
        if self.undefined:
            lines.append("undefined (reported by convention): " + ", ".join(sorted(self.undefined)))
        if any(self.excluded.values()):
            lines.append(
                "excluded from macro mean: "
                + ", ".join(f"{k}={v}" for k, v in sorted(self.excluded.items()) if v)
            )
        return "\n".join(lines)


def _check_pair(pred: np.ndarray, label: np.ndarray) -> None:
    if pred.shape != label.shape:
        raise ValueError(f"prediction {pred.shape} and label {label.shape} differ in size")


def confusion(pred: np.ndarray, label: np.ndarray) -> ConfusionCounts:
    _check_pair(pred, label)
    p = np.asarray(pred).astype(bool)
    g = np.asarray(label).astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, tn=p.size - tp - fp - fn, fp=fp, fn=fn)


def _ratio(num: int, den: int, vacuous: float = 0.0) -> tuple[float, bool]:
    if den == 0:
        return vacuous, True
    return num / den, False


def _class_iou(c: ConfusionCounts, cls: str) -> tuple[float, bool]:
    if cls == "lane":
        return _ratio(c.tp, c.tp + c.fp + c.fn, vacuous=1.0)
    if cls == "background":
        return _ratio(c.tn, c.tn + c.fp + c.fn, vacuous=1.0)
    raise ValueError(f"unknown class {cls!r}")


def iou_per_class(pred: np.ndarray, label: np.ndarray, cls: Literal["lane", "background"]) -> float:
    return _class_iou(confusion(pred, label), cls)[0]


def miou(pred: np.ndarray, label: np.ndarray) -> float:
    c = confusion(pred, label)
    return (_class_iou(c, "lane")[0] + _class_iou(c, "background")[0]) / 2


def from_counts(c: ConfusionCounts, mode: str = "single") -> MetricsReport:
    undefined = set()
    lane_iou, u = _class_iou(c, "lane")
    if u:
        undefined.add("lane_iou")
    bg_iou, u = _class_iou(c, "background")
    if u:
        undefined.add("background_iou")
    accuracy, u = _ratio(c.tp + c.tn, c.total)
    if u:
        undefined.add("accuracy")
    precision, u = _ratio(c.tp, c.tp + c.fp)
    if u:
        undefined.add("precision")
    recall, u = _ratio(c.tp, c.tp + c.fn)
    if u:
        undefined.add("recall")
    specificity, u = _ratio(c.tn, c.tn + c.fp)
    if u:
        undefined.add("specificity")
    if "precision" in undefined or "recall" in undefined or precision + recall == 0:
        f1 = 0.0
        undefined.add("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(
        miou=(lane_iou + bg_iou) / 2,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        lane_iou=lane_iou,
        background_iou=bg_iou,
        undefined=frozenset(undefined),
        mode=mode,
    )


def compute_all(counts: ConfusionCounts, pred: np.ndarray | None = None, label: np.ndarray | None = None) -> MetricsReport:
    """All six metrics from ``counts``; masks, when given, must agree with them."""
    if pred is not None and label is not None and confusion(pred, label) != counts:
        raise ValueError("confusion counts are inconsistent with the given masks")
    return from_counts(counts)


def corpus_eval(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
    mode: Literal["micro", "macro"] = "micro",
) -> MetricsReport:
    """Aggregate over a corpus.

    ``micro`` pools confusion counts before computing ratios; ``macro`` averages
    per-image metrics, leaving out values that were undefined for an image.
    """
    counts = [confusion(p, g) for p, g in pairs]
    if not counts:
        raise ValueError("corpus_eval needs at least one (prediction, label) pair")
    if mode == "micro":
        total = ConfusionCounts()
        for c in counts:
            total = total + c
        return from_counts(total, mode="micro")
    if mode != "macro":
        raise ValueError(f"unknown aggregation mode {mode!r}")

    reports = [from_counts(c) for c in counts]
    averaged: dict[str, float] = {}
    excluded: dict[str, int] = {}
    undefined = set()
    for name in METRIC_NAMES + ("lane_iou", "background_iou"):
        kept = [getattr(r, name) for r in reports if name not in r.undefined]
        excluded[name] = len(reports) - len(kept)
        if kept:
            averaged[name] = float(np.mean(kept))
        else:
            # every image fell back to the same conventional value
            averaged[name] = float(np.mean([getattr(r, name) for r in reports]))
            undefined.add(name)
    # miou is never undefined per image, so it is averaged directly
    return MetricsReport(**averaged, undefined=frozenset(undefined), mode="macro", excluded=excluded)
