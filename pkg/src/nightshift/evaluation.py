"""Detector scoring: IoU matching, accumulated precision/recall, and the
VOC-2012 interpolated average precision.

Matching is greedy over detections sorted by descending confidence (ties
broken by image id, then by the box's canonical serialization, so results are
identical however the input was ordered). A detection is a true positive iff
its best-IoU *unmatched* ground-truth box in the same image clears the IoU
threshold.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .datasets import BoundingBox, LabeledDataset, box_sort_key
from .errors import EvaluationError, ValidationError

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}")

    def to_payload(self) -> dict:
        return {
            "image_id": self.image_id,
            "x1": round(self.box.x1, 3),
            "y1": round(self.box.y1, 3),
            "x2": round(self.box.x2, 3),
            "y2": round(self.box.y2, 3),
            "confidence": self.confidence,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "Detection":
        return cls(
            image_id=str(payload["image_id"]),
            box=BoundingBox(
                x1=float(payload["x1"]), y1=float(payload["y1"]),
                x2=float(payload["x2"]), y2=float(payload["y2"]),
            ),
            confidence=float(payload["confidence"]),
        )


def save_detections(dets: Sequence[Detection], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([d.to_payload() for d in dets], indent=2, sort_keys=True) + "\n")
    return path


def load_detections(path: Path | str) -> list[Detection]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, list):
        raise EvaluationError(f"{path}: detections file must be a JSON array")
    return [Detection.from_payload(d) for d in payload]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """area(a n b) / area(a u b), continuous coordinates."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = max(0.0, ix2 - ix1)
    ih = max(0.0, iy2 - iy1)
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


@dataclass(frozen=True)
class MatchResult:
    ordered: tuple[Detection, ...]  # confidence-descending, ties resolved
    labels: tuple[bool, ...]        # True = TP, aligned with `ordered`
    fn: int                         # unmatched ground truths

    @property
    def tp(self) -> int:
        return sum(self.labels)

    @property
    def fp(self) -> int:
        return len(self.labels) - self.tp


def _detection_order_key(det: Detection) -> tuple:
    return (-det.confidence, det.image_id, box_sort_key(det.box))


def match_detections(
    dets: Sequence[Detection],
    gts: Mapping[str, Sequence[BoundingBox]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedy confidence-ordered matching of detections to ground truths."""
    unknown = sorted({d.image_id for d in dets} - set(gts))
    if unknown:
        raise EvaluationError(f"detections reference unknown image ids: {unknown[:5]}")

    ordered = tuple(sorted(dets, key=_detection_order_key))
    matched: dict[str, list[bool]] = {img: [False] * len(boxes) for img, boxes in gts.items()}
    labels: list[bool] = []
    for det in ordered:
        boxes = gts[det.image_id]
        taken = matched[det.image_id]
        best_iou = 0.0
        best_idx = -1
        for idx, gt_box in enumerate(boxes):
            if taken[idx]:
                continue
            overlap = iou(det.box, gt_box)
            if overlap > best_iou:
                best_iou = overlap
                best_idx = idx
        if best_idx >= 0 and best_iou >= iou_threshold:
            taken[best_idx] = True
            labels.append(True)
        else:
            labels.append(False)

    total_gt = sum(len(boxes) for boxes in gts.values())
    fn = total_gt - sum(labels)
    return MatchResult(ordered=ordered, labels=tuple(labels), fn=fn)


@dataclass(frozen=True)
class PRCurve:
    """Accumulated (recall, precision) points plus the interpolated envelope
    p_interp(r) = max{precision(r') : r' >= r}."""

    points: tuple[tuple[float, float], ...]
    interpolated: tuple[tuple[float, float], ...]


def interpolated_ap(labels: Sequence[bool], total_gt: int) -> tuple[PRCurve, float]:
    """VOC-2012 interpolated AP from an ordered TP/FP sequence.

    AP is the area under the interpolated precision envelope integrated over
    recall in [0, 1]; precision is 0 beyond the highest achieved recall.
    """
    if total_gt < 1:
        raise EvaluationError("AP is undefined with zero ground-truth boxes")

    points: list[tuple[float, float]] = []
    tp = 0
    for i, is_tp in enumerate(labels, start=1):
        tp += int(is_tp)
        points.append((tp / total_gt, tp / i))

    # Precision envelope: running maximum from the right.
    interpolated: list[tuple[float, float]] = []
    best = 0.0
    for recall, precision in reversed(points):
        best = max(best, precision)
        interpolated.append((recall, best))
    interpolated.reverse()

    ap = 0.0
    prev_recall = 0.0
    for recall, precision in interpolated:
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return PRCurve(points=tuple(points), interpolated=tuple(interpolated)), ap


@dataclass(frozen=True)
class EvalReport:
    ap: Mapping[str, float]
    mean_ap: float
    tp: int
    fp: int
    fn: int
    iou_threshold: float

    def to_payload(self) -> dict:
        return {
            "ap": dict(sorted(self.ap.items())),
            "mean_ap": self.mean_ap,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "iou_threshold": self.iou_threshold,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "EvalReport":
        return cls(
            ap={str(k): float(v) for k, v in payload["ap"].items()},
            mean_ap=float(payload["mean_ap"]),
            tp=int(payload["tp"]),
            fp=int(payload["fp"]),
            fn=int(payload["fn"]),
            iou_threshold=float(payload["iou_threshold"]),
        )


def save_report(report: EvalReport, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_payload(), indent=2, sort_keys=True) + "\n")
    return path


def load_report(path: Path | str) -> EvalReport:
    return EvalReport.from_payload(json.loads(Path(path).read_text()))


def evaluate(
    dets: Sequence[Detection],
    dataset: LabeledDataset,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """Score detections against a dataset's ground truth, per class.

    This artifact is single-class (car), but the per-class loop keeps mAP
    honest: mAP is the mean of per-class APs for every class present in the
    ground truth.
    """
    classes = sorted({b.category for r in dataset.records for b in r.boxes})
    if not classes:
        raise EvaluationError(f"dataset '{dataset.name}' has no ground-truth boxes")

    ap: dict[str, float] = {}
    tp = fp = fn = 0
    for category in classes:
        gts = {
            r.id: [b for b in r.boxes if b.category == category]
            for r in dataset.records
        }
        class_dets = [d for d in dets if d.box.category == category]
        total_gt = sum(len(v) for v in gts.values())
        match = match_detections(class_dets, gts, iou_threshold)
        _, class_ap = interpolated_ap(match.labels, total_gt)
        ap[category] = class_ap
        tp += match.tp
        fp += match.fp
        fn += match.fn

    mean_ap = sum(ap.values()) / len(ap)
    return EvalReport(ap=ap, mean_ap=mean_ap, tp=tp, fp=fp, fn=fn,
                      iou_threshold=iou_threshold)


def report_csv_rows(report: EvalReport) -> list[list]:
    """Rows for a spreadsheet export of an EvalReport."""
    rows: list[list] = [["class", "ap", "tp", "fp", "fn", "iou_threshold"]]
    for category, value in sorted(report.ap.items()):
        rows.append([category, f"{value:.6f}", report.tp, report.fp, report.fn,
                     report.iou_threshold])
    rows.append(["mAP", f"{report.mean_ap:.6f}", report.tp, report.fp, report.fn,
                 report.iou_threshold])
    return rows
