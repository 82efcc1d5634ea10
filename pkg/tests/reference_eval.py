"""Independent brute-force reference evaluator.

Deliberately shares no code with nightshift.evaluation: plain tuples, plain
loops, O(n^2) suffix maxima for the interpolated precision. Implements the
same documented contract (confidence-descending order with image-id/box-
serialization tie-breaks, greedy best-unmatched matching, VOC-2012 AP).
"""
from __future__ import annotations

import json


def ref_iou(a: tuple, b: tuple) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    ox = min(ax2, bx2) - max(ax1, bx1)
    oy = min(ay2, by2) - max(ay1, by1)
    if ox <= 0 or oy <= 0:
        return 0.0
    inter = ox * oy
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def _tie_key(det: dict) -> tuple:
    x1, y1, x2, y2 = det["box"]
    serialized = json.dumps({
        "category": "car",
        "occluded": False,
        "truncated": False,
        "x1": round(x1, 3), "x2": round(x2, 3),
        "y1": round(y1, 3), "y2": round(y2, 3),
    }, sort_keys=True)
    return (-det["confidence"], det["image_id"], serialized)


def ref_evaluate(detections: list[dict], gts: dict[str, list[tuple]],
                 iou_threshold: float) -> dict:
    """detections: [{image_id, box: (x1,y1,x2,y2), confidence}]; gts maps
    image id -> list of boxes. Returns ap/tp/fp/fn for the single class."""
    order = sorted(detections, key=_tie_key)
    used = {img: [False] * len(boxes) for img, boxes in gts.items()}

    labels = []
    for det in order:
        boxes = gts[det["image_id"]]
        flags = used[det["image_id"]]
        best = -1.0
        best_i = -1
        for i, gt in enumerate(boxes):
            if flags[i]:
                continue
            ov = ref_iou(det["box"], gt)
            if ov > best:
                best = ov
                best_i = i
        if best_i >= 0 and best >= iou_threshold:
            flags[best_i] = True
            labels.append(1)
        else:
            labels.append(0)

    total_gt = sum(len(v) for v in gts.values())
    recalls = []
    precisions = []
    tp = 0
    for i, lab in enumerate(labels, start=1):
        tp += lab
        recalls.append(tp / total_gt)
        precisions.append(tp / i)

    ap = 0.0
    prev_r = 0.0
    for i, r in enumerate(recalls):
        p_interp = max(precisions[i:])  # O(n^2), clarity over speed
        ap += (r - prev_r) * p_interp
        prev_r = r

    n_tp = sum(labels)
    return {
        "ap": ap,
        "tp": n_tp,
        "fp": len(labels) - n_tp,
        "fn": total_gt - n_tp,
    }
