"""Geometric dataset preparation: lane-centered square crop, rescale to the
translator resolution, and size-based box pruning.

All box coordinates stay continuous through the pipeline; rounding happens
only when a dataset is serialized.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .datasets import BoundingBox, LabeledDataset, SourceImageRecord
from .errors import ValidationError
from .imaging import load_image, require_rgb8, save_image


@dataclass(frozen=True)
class CropSpec:
    """Square crop; `horizontal_anchor` picks the x offset within the slack
    (0 = left edge, 0.5 = centered, 1 = right edge). Vertically the window is
    bottom-aligned so the road stays in frame."""

    side: int = 720
    horizontal_anchor: float = 0.5

    def __post_init__(self):
        if self.side < 1:
            raise ValidationError(f"crop side must be >= 1, got {self.side}")
        if not 0.0 <= self.horizontal_anchor <= 1.0:
            raise ValidationError(
                f"horizontal_anchor must lie in [0, 1], got {self.horizontal_anchor}"
            )

    def to_payload(self) -> dict:
        return {"side": self.side, "horizontal_anchor": self.horizontal_anchor}


@dataclass(frozen=True)
class ResizeSpec:
    target_side: int = 256

    def __post_init__(self):
        if self.target_side < 1:
            raise ValidationError(f"target_side must be >= 1, got {self.target_side}")

    def to_payload(self) -> dict:
        return {"target_side": self.target_side}


@dataclass(frozen=True)
class PruneSpec:
    """Minimum box side in resized pixels; occluded-or-truncated boxes use the
    stricter `min_side_occluded`."""

    min_side: float = 20.0
    min_side_occluded: float = 30.0

    def __post_init__(self):
        if self.min_side > self.min_side_occluded:
            raise ValidationError(
                f"min_side ({self.min_side}) must be <= min_side_occluded "
                f"({self.min_side_occluded})"
            )

    def to_payload(self) -> dict:
        return {"min_side": self.min_side, "min_side_occluded": self.min_side_occluded}


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def crop_and_transform(
    record: SourceImageRecord, pixels: np.ndarray, crop: CropSpec
) -> tuple[np.ndarray, SourceImageRecord]:
    """Cut the side x side window and translate/clip boxes into it.

    Window top-left is (round(anchor * (width - side)), height - side); boxes
    losing all width or height are removed.
    """
    require_rgb8(pixels)
    height, width = pixels.shape[:2]
    if (record.height, record.width) != (height, width):
        raise ValidationError(
            f"record {record.id} is {record.width}x{record.height} but pixel "
            f"buffer is {width}x{height}"
        )
    if crop.side > min(width, height):
        raise ValidationError(
            f"crop side {crop.side} exceeds image {width}x{height} for record {record.id}"
        )

    x_off = _round_half_up(crop.horizontal_anchor * (width - crop.side))
    y_off = height - crop.side
    window = np.ascontiguousarray(
        pixels[y_off:y_off + crop.side, x_off:x_off + crop.side]
    )

    boxes = []
    for box in record.boxes:
        shifted = dataclasses.replace(
            box, x1=box.x1 - x_off, y1=box.y1 - y_off, x2=box.x2 - x_off, y2=box.y2 - y_off
        )
        clipped = shifted.clamped(crop.side, crop.side)
        if clipped is not None:
            boxes.append(clipped)

    new_record = dataclasses.replace(
        record, width=crop.side, height=crop.side, boxes=tuple(boxes)
    )
    return window, new_record


def rescale(
    pixels: np.ndarray, boxes: Sequence[BoundingBox], spec: ResizeSpec
) -> tuple[np.ndarray, list[BoundingBox]]:
    """Bilinear resample a square image and scale boxes by target/input."""
    require_rgb8(pixels)
    height, width = pixels.shape[:2]
    if height != width:
        raise ValidationError(f"rescale requires a square input, got {width}x{height}")

    if spec.target_side == width:
        resized = pixels.copy()
    else:
        img = Image.fromarray(pixels, mode="RGB")
        resized = np.asarray(
            img.resize((spec.target_side, spec.target_side), Image.BILINEAR),
            dtype=np.uint8,
        )
    scale = spec.target_side / width
    scaled = [
        dataclasses.replace(b, x1=b.x1 * scale, y1=b.y1 * scale,
                            x2=b.x2 * scale, y2=b.y2 * scale)
        for b in boxes
    ]
    return resized, scaled


def prune_small_boxes(boxes: Sequence[BoundingBox], spec: PruneSpec) -> list[BoundingBox]:
    """Drop boxes with min(width, height) < min_side, or < min_side_occluded
    when the box is occluded or truncated. Strict inequality: an exactly
    20x20 unflagged box survives."""
    kept = []
    for box in boxes:
        threshold = spec.min_side_occluded if (box.occluded or box.truncated) else spec.min_side
        if box.min_side < threshold:
            continue
        kept.append(box)
    return kept


def prepare_record(
    record: SourceImageRecord,
    pixels: np.ndarray,
    crop: CropSpec,
    resize: ResizeSpec,
    prune: PruneSpec,
) -> tuple[np.ndarray, SourceImageRecord]:
    """crop -> rescale -> prune; a record may come out with zero boxes (empty
    tag), the harness decides whether to exclude it."""
    window, cropped = crop_and_transform(record, pixels, crop)
    resized, boxes = rescale(window, cropped.boxes, resize)
    pruned = prune_small_boxes(boxes, prune)
    final = dataclasses.replace(
        cropped, width=resize.target_side, height=resize.target_side, boxes=tuple(pruned)
    )
    return resized, final


def geometry_stanza(crop: CropSpec, resize: ResizeSpec, prune: PruneSpec) -> dict:
    return {"crop": crop.to_payload(), "resize": resize.to_payload(),
            "prune": prune.to_payload()}


def prepare_dataset(
    ds: LabeledDataset,
    images_root: Path | str,
    out_images_dir: Path | str,
    crop: CropSpec,
    resize: ResizeSpec,
    prune: PruneSpec,
    *,
    drop_empty: bool = True,
) -> tuple[LabeledDataset, int]:
    """Run the full geometric pipeline over a dataset, writing processed PNGs.

    Returns the prepared dataset (geometry stanza attached) and the number of
    records dropped for ending up with zero boxes (only when `drop_empty`).
    """
    images_root = Path(images_root)
    out_images_dir = Path(out_images_dir)
    out_images_dir.mkdir(parents=True, exist_ok=True)

    prepared: list[SourceImageRecord] = []
    dropped_empty = 0
    for record in ds.records:
        pixels = load_image(images_root / record.image_path)
        out_pixels, out_record = prepare_record(record, pixels, crop, resize, prune)
        if drop_empty and not out_record.boxes:
            dropped_empty += 1
            continue
        image_name = f"{record.id}.png"
        save_image(out_pixels, out_images_dir / image_name)
        prepared.append(dataclasses.replace(out_record, image_path=image_name))

    out_ds = LabeledDataset.from_records(
        ds.name, prepared, sort=False,
        geometry=geometry_stanza(crop, resize, prune), provenance=ds.provenance,
    )
    return out_ds, dropped_empty
