"""Confusion matrices, per-class / mean IoU and per-class distribution statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .imagecore import LabelError, LabelMap


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = pixels with reference class i and candidate class j."""

    counts: np.ndarray
    ignored: int = 0
    ignore_class: Optional[int] = None
    images: int = 1

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion counts must be square, got shape {counts.shape}")
        if (counts < 0).any() or self.ignored < 0:
            raise ValueError("confusion counts must be non-negative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        """Pixels compared, including ignored ones."""
        return int(self.counts.sum()) + self.ignored

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        if other.num_classes != self.num_classes:
            raise ValueError(f"cannot add {self.num_classes}- and {other.num_classes}-class matrices")
        if other.ignore_class != self.ignore_class:
            raise ValueError("cannot add matrices with different ignore classes")
        return ConfusionMatrix(
            self.counts + other.counts, self.ignored + other.ignored, self.ignore_class, self.images + other.images
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return (
            np.array_equal(self.counts, other.counts)
            and self.ignored == other.ignored
            and self.ignore_class == other.ignore_class
        )

    @classmethod
    def zeros(cls, num_classes: int, ignore_class: Optional[int] = None) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), 0, ignore_class, 0)


def confusion(
    reference: LabelMap, candidate: LabelMap, ignore: Optional[int] = None, num_classes: Optional[int] = None
) -> ConfusionMatrix:
    """Tally (reference, candidate) class pairs over all pixels.

    Pixels whose reference class equals ``ignore`` are only counted in
    ``ignored``. ``num_classes`` defaults to the larger of the two maps' K.
    """
    if reference.size != candidate.size:
        raise EvaluationError(
            f"dimension mismatch: reference is {reference.width}x{reference.height}, "
            f"candidate is {candidate.width}x{candidate.height}"
        )
    k = num_classes if num_classes is not None else max(reference.num_classes, candidate.num_classes)
    for name, m in (("reference", reference), ("candidate", candidate)):
        top = int(m.labels.max())
        if top >= k:
            raise LabelError(f"{name} label {top} >= class count {k}")
    ref = reference.labels.ravel().astype(np.int64)
    cand = candidate.labels.ravel().astype(np.int64)
    ignored = 0
    if ignore is not None:
        keep = ref != ignore
        ignored = int(ref.size - keep.sum())
        ref, cand = ref[keep], cand[keep]
    counts = np.bincount(ref * k + cand, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, ignored, ignore)


@dataclass(frozen=True)
class IouReport:
    per_class: list[tuple[int, Optional[float]]]
    mean_iou: float
    pixel_accuracy: float
    images_evaluated: int

    def iou(self, class_id: int) -> Optional[float]:
        return self.per_class[class_id][1]

    def to_dict(self) -> dict:
        return {
            "per_class": [{"class_id": c, "iou": v} for c, v in self.per_class],
            "mean_iou": self.mean_iou,
            "pixel_accuracy": self.pixel_accuracy,
            "images_evaluated": self.images_evaluated,
        }


def per_class_iou(m: ConfusionMatrix) -> list[Optional[float]]:
    """IoU per class, ``None`` where the union is empty or the class is ignored."""
    tp = np.diag(m.counts)
    union = m.counts.sum(axis=1) + m.counts.sum(axis=0) - tp
    out: list[Optional[float]] = []
    for c in range(m.num_classes):
        if c == m.ignore_class or union[c] == 0:
            out.append(None)
        else:
            out.append(int(tp[c]) / int(union[c]))
    return out


def iou_from_confusion(m: ConfusionMatrix) -> IouReport:
    ious = per_class_iou(m)
    defined = [v for v in ious if v is not None]
    if not defined:
        raise EvaluationError("no evaluable pixels")
    evaluated = int(m.counts.sum())
    accuracy = int(np.trace(m.counts)) / evaluated if evaluated else 0.0
    return IouReport(
        per_class=list(enumerate(ious)),
        mean_iou=math.fsum(defined) / len(defined),
        pixel_accuracy=accuracy,
        images_evaluated=m.images,
    )


@dataclass(frozen=True)
class ClassStats:
    class_id: int
    count: int
    min: Optional[float] = None
    q25: Optional[float] = None
    median: Optional[float] = None
    q75: Optional[float] = None
    max: Optional[float] = None
    mean: Optional[float] = None

    STAT_FIELDS = ("min", "q25", "median", "q75", "max", "mean")

    def to_dict(self) -> dict:
        d = {"class_id": self.class_id, "count": self.count}
        d.update({k: getattr(self, k) for k in self.STAT_FIELDS})
        return d


@dataclass(frozen=True)
class DistributionReport:
    per_class: list[ClassStats]
    micro: IouReport
    images: int = field(default=0)

    @property
    def mean_iou(self) -> float:
        return self.micro.mean_iou

    def stats(self, class_id: int) -> ClassStats:
        return self.per_class[class_id]

    def to_dict(self) -> dict:
        return {
            "images": self.images,
            "mean_iou": self.mean_iou,
            "pixel_accuracy": self.micro.pixel_accuracy,
            "per_class_iou": self.micro.to_dict()["per_class"],
            "per_class_distribution": [s.to_dict() for s in self.per_class],
        }


def class_stats(class_id: int, values: Sequence[float]) -> ClassStats:
    if not values:
        return ClassStats(class_id, 0)
    v = np.asarray(values, dtype=np.float64)
    q25, median, q75 = np.percentile(v, [25, 50, 75], method="linear")
    return ClassStats(
        class_id, len(v), float(v.min()), float(q25), float(median), float(q75), float(v.max()), math.fsum(v) / len(v)
    )


def dataset_distribution(matrices: Sequence[ConfusionMatrix]) -> DistributionReport:
    """Per-class box-plot statistics of per-image IoU, plus micro-averaged mean IoU."""
    if not matrices:
        raise EvaluationError("no evaluable pixels")
    k = matrices[0].num_classes
    if any(m.num_classes != k for m in matrices):
        raise ValueError("all confusion matrices must share the class count")
    per_image = [per_class_iou(m) for m in matrices]
    stats = [class_stats(c, [ious[c] for ious in per_image if ious[c] is not None]) for c in range(k)]
    total = matrices[0]
    for m in matrices[1:]:
        total = total + m
    return DistributionReport(stats, iou_from_confusion(total), images=total.images)


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.3f}"


def distribution_csv(groups: dict[str, DistributionReport], class_names: Optional[Sequence[str]] = None) -> str:
    """One row per (group, class) with box-plot statistics and one summary row per group."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "class_id", "class_name", "count", *ClassStats.STAT_FIELDS, "micro_iou"])
    for group, report in groups.items():
        for s in report.per_class:
            name = class_names[s.class_id] if class_names and s.class_id < len(class_names) else ""
            writer.writerow(
                [group, s.class_id, name, s.count, *(_fmt(getattr(s, f)) for f in ClassStats.STAT_FIELDS),
                 _fmt(report.micro.iou(s.class_id))]
            )
        writer.writerow([group, "all", "mean", report.images, "", "", "", "", "", "", _fmt(report.mean_iou)])
    return buf.getvalue()
