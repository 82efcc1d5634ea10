import dataclasses
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nightshift.datasets import BoundingBox, LabeledDataset
from nightshift.errors import ValidationError
from nightshift.geometry import (
    CropSpec,
    PruneSpec,
    ResizeSpec,
    crop_and_transform,
    prepare_dataset,
    prepare_record,
    prune_small_boxes,
    rescale,
)
from nightshift.imaging import save_image

from conftest import simple_record

STANDARD_CROP = CropSpec(side=720, horizontal_anchor=0.5)
STANDARD_RESIZE = ResizeSpec(target_side=256)
STANDARD_PRUNE = PruneSpec(min_side=20.0, min_side_occluded=30.0)


def _image(width, height, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def _record(width, height, boxes):
    return dataclasses.replace(
        simple_record("rec", boxes), width=width, height=height
    )


class TestCrop:
    def test_centered_720_window_origin(self):
        # Brute-force oracle: the window must be exactly pixels[0:720, 280:1000].
        pixels = _image(1280, 720)
        record = _record(1280, 720, [])
        window, out = crop_and_transform(record, pixels, STANDARD_CROP)
        assert np.array_equal(window, pixels[0:720, 280:1000])
        assert (out.width, out.height) == (720, 720)

    def test_box_translation(self):
        pixels = _image(1280, 720)
        record = _record(1280, 720, [BoundingBox(300, 100, 500, 300)])
        _, out = crop_and_transform(record, pixels, STANDARD_CROP)
        box = out.boxes[0]
        assert (box.x1, box.y1, box.x2, box.y2) == (20.0, 100.0, 220.0, 300.0)

    def test_identity_when_already_square(self):
        pixels = _image(720, 720)
        boxes = [BoundingBox(10, 20, 200, 250)]
        record = _record(720, 720, boxes)
        window, out = crop_and_transform(record, pixels, CropSpec(side=720))
        assert np.array_equal(window, pixels)
        assert out.boxes == tuple(boxes)

    def test_box_outside_window_removed(self):
        pixels = _image(1280, 720)
        record = _record(1280, 720, [BoundingBox(0, 0, 100, 100)])  # left of x=280
        _, out = crop_and_transform(record, pixels, STANDARD_CROP)
        assert out.boxes == ()

    def test_oversized_crop_rejected(self):
        pixels = _image(640, 480)
        record = _record(640, 480, [])
        with pytest.raises(ValidationError):
            crop_and_transform(record, pixels, CropSpec(side=720))

    def test_anchor_extremes(self):
        pixels = _image(1280, 720)
        record = _record(1280, 720, [])
        left, _ = crop_and_transform(record, pixels, CropSpec(720, horizontal_anchor=0.0))
        right, _ = crop_and_transform(record, pixels, CropSpec(720, horizontal_anchor=1.0))
        assert np.array_equal(left, pixels[:, 0:720])
        assert np.array_equal(right, pixels[:, 560:1280])

    def test_pixel_center_membership_preserved(self):
        # Brute force on a small synthetic image: any pixel center inside a box
        # before the crop maps inside the translated box afterwards.
        rng = random.Random(11)
        for _ in range(20):
            w, h, side = 48, 32, 24
            x1 = rng.uniform(0, w - 10)
            y1 = rng.uniform(0, h - 10)
            box = BoundingBox(x1, y1, x1 + rng.uniform(4, 9), y1 + rng.uniform(4, 9))
            record = _record(w, h, [box])
            pixels = _image(w, h)
            crop = CropSpec(side=side, horizontal_anchor=rng.random())
            _, out = crop_and_transform(record, pixels, crop)
            x_off = int(np.floor(crop.horizontal_anchor * (w - side) + 0.5))
            y_off = h - side
            for py in range(y_off, h):
                for px in range(x_off, x_off + side):
                    cx, cy = px + 0.5, py + 0.5
                    inside = box.x1 < cx < box.x2 and box.y1 < cy < box.y2
                    if inside and out.boxes:
                        t = out.boxes[0]
                        assert t.x1 <= cx - x_off <= t.x2
                        assert t.y1 <= cy - y_off <= t.y2


class TestRescale:
    def test_720_to_256_box_scaling(self):
        pixels = _image(720, 720)
        _, boxes = rescale(pixels, [BoundingBox(20, 100, 220, 300)], STANDARD_RESIZE)
        # Exact rational oracle: s = 256/720; 20*s = 7.111..., 100*s = 35.555...,
        # 220*s = 78.222..., 300*s = 106.666...
        box = boxes[0]
        assert box.x1 == pytest.approx(7.111, abs=1e-3)
        assert box.y1 == pytest.approx(35.556, abs=1e-3)
        assert box.x2 == pytest.approx(78.222, abs=1e-3)
        assert box.y2 == pytest.approx(106.667, abs=1e-3)

    def test_identity_scale(self):
        pixels = _image(256, 256)
        boxes = [BoundingBox(5, 5, 50, 60)]
        out_pixels, out_boxes = rescale(pixels, boxes, ResizeSpec(256))
        assert np.array_equal(out_pixels, pixels)
        assert out_boxes == boxes

    def test_full_frame_box(self):
        pixels = _image(720, 720)
        _, boxes = rescale(pixels, [BoundingBox(0, 0, 720, 720)], STANDARD_RESIZE)
        box = boxes[0]
        assert (box.x1, box.y1, box.x2, box.y2) == (0.0, 0.0, 256.0, 256.0)

    def test_non_square_rejected(self):
        with pytest.raises(ValidationError):
            rescale(_image(720, 480), [], STANDARD_RESIZE)


class TestPrune:
    def test_small_unflagged_removed(self):
        boxes = [BoundingBox(0, 0, 19.5, 40)]
        assert prune_small_boxes(boxes, STANDARD_PRUNE) == []

    def test_small_occluded_removed(self):
        boxes = [BoundingBox(0, 0, 25, 60, occluded=True)]
        assert prune_small_boxes(boxes, STANDARD_PRUNE) == []

    def test_truncated_counts_as_flagged(self):
        boxes = [BoundingBox(0, 0, 25, 60, truncated=True)]
        assert prune_small_boxes(boxes, STANDARD_PRUNE) == []

    def test_boundary_is_strict(self):
        kept = prune_small_boxes([BoundingBox(0, 0, 20, 20)], STANDARD_PRUNE)
        assert len(kept) == 1
        kept = prune_small_boxes([BoundingBox(0, 0, 30, 95, occluded=True)], STANDARD_PRUNE)
        assert len(kept) == 1
        gone = prune_small_boxes([BoundingBox(0, 0, 19.999, 40)], STANDARD_PRUNE)
        assert gone == []

    def test_order_preserved(self):
        boxes = [BoundingBox(i, 0, i + 30 + i, 40) for i in range(5)]
        kept = prune_small_boxes(boxes, STANDARD_PRUNE)
        assert kept == boxes

    @given(st.floats(min_value=0, max_value=40), st.floats(min_value=0, max_value=40))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_min_side(self, low, high):
        low, high = sorted((low, high))
        boxes = [
            BoundingBox(0, 0, 10 + 3 * i, 12 + 2 * i, occluded=(i % 2 == 0))
            for i in range(8)
        ]
        spec_low = PruneSpec(min_side=low, min_side_occluded=max(low, 41))
        spec_high = PruneSpec(min_side=high, min_side_occluded=max(high, 41))
        assert len(prune_small_boxes(boxes, spec_high)) <= len(prune_small_boxes(boxes, spec_low))


class TestPrepareRecord:
    def test_full_standard_configuration(self):
        pixels = _image(1280, 720)
        record = _record(1280, 720, [BoundingBox(300, 100, 500, 300)])
        out_pixels, out = prepare_record(record, pixels, STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
        assert out_pixels.shape == (256, 256, 3)
        assert (out.width, out.height) == (256, 256)
        assert len(out.boxes) == 1

    def test_small_box_shrinks_to_empty(self):
        # 50 px box scales to 50 * 256/720 = 17.78 < 20 -> pruned, record empty.
        pixels = _image(1280, 720)
        record = _record(1280, 720, [BoundingBox(400, 100, 450, 150)])
        _, out = prepare_record(record, pixels, STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
        assert out.boxes == ()

    def test_no_boxes_in_no_boxes_out(self):
        pixels = _image(1280, 720)
        record = _record(1280, 720, [])
        _, out = prepare_record(record, pixels, STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
        assert out.boxes == ()

    def test_equals_manual_composition(self):
        rng = random.Random(3)
        pixels = _image(1280, 720, seed=5)
        boxes = []
        for _ in range(6):
            x1 = rng.uniform(0, 1200)
            y1 = rng.uniform(0, 600)
            boxes.append(BoundingBox(x1, y1, x1 + rng.uniform(20, 80), y1 + rng.uniform(20, 119),
                                     occluded=rng.random() < 0.5))
        record = _record(1280, 720, boxes)

        composed_pixels, composed = prepare_record(
            record, pixels, STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
        window, cropped = crop_and_transform(record, pixels, STANDARD_CROP)
        resized, scaled = rescale(window, cropped.boxes, STANDARD_RESIZE)
        manual = tuple(prune_small_boxes(scaled, STANDARD_PRUNE))
        assert composed.boxes == manual
        assert np.array_equal(composed_pixels, resized)

    def test_output_boxes_contained(self):
        rng = random.Random(9)
        for seed in range(10):
            pixels = _image(1280, 720, seed=seed)
            boxes = []
            for _ in range(4):
                x1 = rng.uniform(-20, 1250)
                y1 = rng.uniform(-20, 690)
                boxes.append(BoundingBox(x1, y1, x1 + rng.uniform(30, 300), y1 + rng.uniform(30, 300))
                             .clamped(1280, 720))
            record = _record(1280, 720, [b for b in boxes if b is not None])
            _, out = prepare_record(record, pixels, STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
            for box in out.boxes:
                assert 0.0 <= box.x1 < box.x2 <= 256.0
                assert 0.0 <= box.y1 < box.y2 <= 256.0


def test_prepare_dataset_writes_images_and_stanza(tmp_path):
    images_in = tmp_path / "in"
    pixels = _image(1280, 720)
    save_image(pixels, images_in / "a.png")
    record = dataclasses.replace(
        _record(1280, 720, [BoundingBox(300, 100, 560, 400)]), id="a", image_path="a.png")
    ds = LabeledDataset.from_records("pool", [record])

    out, dropped = prepare_dataset(ds, images_in, tmp_path / "out",
                                   STANDARD_CROP, STANDARD_RESIZE, STANDARD_PRUNE)
    assert dropped == 0
    assert (tmp_path / "out" / "a.png").is_file()
    assert out.geometry == {
        "crop": {"side": 720, "horizontal_anchor": 0.5},
        "resize": {"target_side": 256},
        "prune": {"min_side": 20.0, "min_side_occluded": 30.0},
    }
    assert out.records[0].width == 256
