"""Detector adapter stub for desk-scale pipeline runs.

Implements the external detector contract (train/infer subcommands) without
any learning: "training" records which luma domains (bright/dark) the training
images covered, and inference replays ground truth with seeded confidence
noise and box jitter. Images from a domain the model never saw get heavy
jitter, misses, and spurious boxes, so training compositions that include the
target domain score measurably higher than source-only training - the same
ordering the real pipeline is built to demonstrate.

Determinism: every random draw comes from a generator seeded by
sha256(seed, training-set fingerprint, record id), so equal seeds reproduce
identical detections while different training compositions stay
distinguishable.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
from pathlib import Path

LUMA_SPLIT = 100.0

# Covered-domain detections: near-perfect boxes, occasional bad slip. The slip
# rate keeps per-seed mAP high but below 1.0, so run statistics stay
# non-degenerate.
COVERED_JITTER_PX = 1.5
COVERED_SLIP_PROB = 0.06
COVERED_SLIP_FRACTION = 0.4
COVERED_CONFIDENCE = (0.75, 0.99)

# Uncovered-domain detections: misses, heavy jitter, stray false positives.
UNCOVERED_MISS_PROB = 0.3
UNCOVERED_JITTER_FRACTION = 0.45
UNCOVERED_CONFIDENCE = (0.05, 0.55)
UNCOVERED_FALSE_POSITIVE_PROB = 0.35

MODEL_FILE = "model.json"


def _record_rng(seed: int, fingerprint: str, record_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{fingerprint}:{record_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _domain(luma: float) -> str:
    return "bright" if luma >= LUMA_SPLIT else "dark"


def _load_records(dataset_path: Path) -> list[dict]:
    payload = json.loads(dataset_path.read_text())
    return payload.get("records", [])


def _image_luma(images_dir: Path, record: dict) -> float:
    from .imaging import load_image, mean_luma

    return mean_luma(load_image(images_dir / record["image_path"]))


def _clamp_box(x1: float, y1: float, x2: float, y2: float,
               width: float, height: float) -> tuple[float, float, float, float]:
    x1, x2 = sorted((min(max(x1, 0.0), width), min(max(x2, 0.0), width)))
    y1, y2 = sorted((min(max(y1, 0.0), height), min(max(y2, 0.0), height)))
    if x2 - x1 < 1.0:
        x1, x2 = max(0.0, min(x1, width - 1.0)), max(1.0, min(x1 + 1.0, width))
    if y2 - y1 < 1.0:
        y1, y2 = max(0.0, min(y1, height - 1.0)), max(1.0, min(y1 + 1.0, height))
    return x1, y1, x2, y2


def cmd_train(args: argparse.Namespace) -> int:
    dataset_path = Path(args.dataset)
    images_dir = Path(args.images)
    records = _load_records(dataset_path)

    total_boxes = sum(len(r.get("boxes", [])) for r in records)
    if total_boxes == 0:
        print("stub-detector: training dataset has no boxes", file=sys.stderr)
        return 2

    domains: set[str] = set()
    for record in records:
        try:
            domains.add(_domain(_image_luma(images_dir, record)))
        except FileNotFoundError:
            print(f"stub-detector: missing training image for id {record['id']}",
                  file=sys.stderr)
            return 2

    fingerprint = hashlib.sha256(
        "\n".join(r["id"] for r in records).encode()
    ).hexdigest()[:16]
    model_dir = Path(args.model_out)
    model_dir.mkdir(parents=True, exist_ok=True)
    (model_dir / MODEL_FILE).write_text(json.dumps({
        "kind": "luma-domain-stub",
        "seed": int(args.seed),
        "domains": sorted(domains),
        "luma_split": LUMA_SPLIT,
        "train_fingerprint": fingerprint,
        "trained_records": len(records),
    }, indent=2, sort_keys=True) + "\n")
    return 0


def _jitter_covered(rng: random.Random, box: dict, width: int, height: int) -> tuple:
    side = min(box["x2"] - box["x1"], box["y2"] - box["y1"])
    if rng.random() < COVERED_SLIP_PROB:
        spread = COVERED_SLIP_FRACTION * side
    else:
        spread = COVERED_JITTER_PX
    coords = [box["x1"] + rng.uniform(-spread, spread),
              box["y1"] + rng.uniform(-spread, spread),
              box["x2"] + rng.uniform(-spread, spread),
              box["y2"] + rng.uniform(-spread, spread)]
    return _clamp_box(*coords, width, height)


def _jitter_uncovered(rng: random.Random, box: dict, width: int, height: int) -> tuple:
    w = box["x2"] - box["x1"]
    h = box["y2"] - box["y1"]
    coords = [box["x1"] + rng.uniform(-UNCOVERED_JITTER_FRACTION, UNCOVERED_JITTER_FRACTION) * w,
              box["y1"] + rng.uniform(-UNCOVERED_JITTER_FRACTION, UNCOVERED_JITTER_FRACTION) * h,
              box["x2"] + rng.uniform(-UNCOVERED_JITTER_FRACTION, UNCOVERED_JITTER_FRACTION) * w,
              box["y2"] + rng.uniform(-UNCOVERED_JITTER_FRACTION, UNCOVERED_JITTER_FRACTION) * h]
    return _clamp_box(*coords, width, height)


def cmd_infer(args: argparse.Namespace) -> int:
    model_path = Path(args.model) / MODEL_FILE
    if not model_path.is_file():
        print(f"stub-detector: no model at {model_path}", file=sys.stderr)
        return 2
    model = json.loads(model_path.read_text())
    seed = int(model["seed"])
    fingerprint = str(model.get("train_fingerprint", ""))
    covered_domains = set(model["domains"])

    records = _load_records(Path(args.dataset))
    images_dir = Path(args.images)

    detections: list[dict] = []
    for record in records:
        try:
            luma = _image_luma(images_dir, record)
        except FileNotFoundError:
            print(f"stub-detector: missing image for id {record['id']}", file=sys.stderr)
            return 2
        covered = _domain(luma) in covered_domains
        rng = _record_rng(seed, fingerprint, record["id"])
        width, height = int(record["width"]), int(record["height"])

        for box in record.get("boxes", []):
            if covered:
                x1, y1, x2, y2 = _jitter_covered(rng, box, width, height)
                confidence = rng.uniform(*COVERED_CONFIDENCE)
            else:
                if rng.random() < UNCOVERED_MISS_PROB:
                    continue
                x1, y1, x2, y2 = _jitter_uncovered(rng, box, width, height)
                confidence = rng.uniform(*UNCOVERED_CONFIDENCE)
            detections.append({
                "image_id": record["id"],
                "x1": round(x1, 3), "y1": round(y1, 3),
                "x2": round(x2, 3), "y2": round(y2, 3),
                "confidence": round(confidence, 6),
            })

        if not covered and rng.random() < UNCOVERED_FALSE_POSITIVE_PROB:
            side = rng.uniform(0.1, 0.3) * min(width, height)
            x1 = rng.uniform(0, width - side)
            y1 = rng.uniform(0, height - side)
            detections.append({
                "image_id": record["id"],
                "x1": round(x1, 3), "y1": round(y1, 3),
                "x2": round(x1 + side, 3), "y2": round(y1 + side, 3),
                "confidence": round(rng.uniform(*UNCOVERED_CONFIDENCE), 6),
            })

    out_path = Path(args.detections_out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(detections, indent=2, sort_keys=True) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nightshift-stub-detector",
        description="Ground-truth-replay detector adapter for pipeline dry runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train")
    train.add_argument("--dataset", required=True)
    train.add_argument("--images", required=True)
    train.add_argument("--seed", required=True, type=int)
    train.add_argument("--model-out", required=True)
    train.set_defaults(func=cmd_train)

    infer = sub.add_parser("infer")
    infer.add_argument("--model", required=True)
    infer.add_argument("--dataset", required=True)
    infer.add_argument("--images", required=True)
    infer.add_argument("--detections-out", required=True)
    infer.set_defaults(func=cmd_infer)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
