import json
import random
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from nightshift.datasets import BoundingBox, LabeledDataset, SourceImageRecord, SceneAttributes


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20190503)


def write_image(path: Path, width: int, height: int, color=(128, 128, 128)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.zeros((height, width, 3), dtype=np.uint8)
    arr[:] = color
    Image.fromarray(arr, "RGB").save(path)
    return path


def write_bdd_labels(path: Path, entries: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=1))
    return path


def bdd_entry(name: str, *, timeofday="daytime", weather="clear", scene="highway",
              labels: list[dict] | None = None) -> dict:
    return {
        "name": name,
        "attributes": {"weather": weather, "scene": scene, "timeofday": timeofday},
        "labels": labels or [],
    }


def bdd_car(x1, y1, x2, y2, *, occluded=False, truncated=False, category="car") -> dict:
    return {
        "category": category,
        "attributes": {"occluded": occluded, "truncated": truncated},
        "box2d": {"x1": x1, "y1": y1, "x2": x2, "y2": y2},
    }


def simple_record(record_id: str, boxes, *, side: int = 256,
                  image_path: str | None = None) -> SourceImageRecord:
    return SourceImageRecord(
        id=record_id, width=side, height=side,
        attributes=SceneAttributes(),
        boxes=tuple(boxes),
        image_path=image_path or f"{record_id}.png",
    )


def simple_dataset(name: str, n: int, *, side: int = 256) -> LabeledDataset:
    records = [
        simple_record(f"{name}{i:04d}", [BoundingBox(10.0, 10.0, 60.0, 60.0)], side=side)
        for i in range(n)
    ]
    return LabeledDataset.from_records(name, records)
