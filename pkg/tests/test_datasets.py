import dataclasses
import random

import numpy as np
import pytest

from nightshift.datasets import (
    BoundingBox,
    FilterCriteria,
    LabeledDataset,
    Scene,
    SceneAttributes,
    TimeOfDay,
    Weather,
    filter_records,
    flag_suspect_labels,
    load_dataset,
    parse_label_file,
    save_dataset,
)
from nightshift.errors import LabelParseError, ValidationError

from conftest import bdd_car, bdd_entry, simple_record, write_bdd_labels, write_image


@pytest.fixture
def label_root(tmp_path):
    images = tmp_path / "images"
    for name in ("a0", "b1", "c2"):
        write_image(images / f"{name}.jpg", 1280, 720)
    return tmp_path, images


def test_non_car_labels_dropped(label_root):
    tmp_path, images = label_root
    entry = bdd_entry("a0.jpg", labels=[
        bdd_car(10, 10, 100, 100),
        bdd_car(200, 200, 300, 300),
        bdd_car(400, 400, 500, 500),
        bdd_car(50, 50, 80, 80, category="traffic light"),
        bdd_car(60, 60, 90, 90, category="traffic light"),
    ])
    labels = write_bdd_labels(tmp_path / "labels.json", [entry])
    ds, summary = parse_label_file(labels, images)
    assert len(ds) == 1
    assert len(ds.records[0].boxes) == 3
    assert summary.non_car_labels == 2


def test_empty_array_parses_to_empty_dataset(label_root):
    tmp_path, images = label_root
    labels = write_bdd_labels(tmp_path / "labels.json", [])
    ds, summary = parse_label_file(labels, images)
    assert len(ds) == 0
    assert summary.entries_total == 0


def test_out_of_bounds_box_is_clamped(label_root):
    tmp_path, images = label_root
    entry = bdd_entry("a0.jpg", labels=[bdd_car(-5, 10, 100, 100)])
    labels = write_bdd_labels(tmp_path / "labels.json", [entry])
    ds, summary = parse_label_file(labels, images)
    box = ds.records[0].boxes[0]
    assert box.x1 == 0.0
    assert box.x2 == 100.0
    assert summary.boxes_clamped == 1


def test_malformed_json_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('[\n  {"name": "x.jpg",}\n]')
    with pytest.raises(LabelParseError) as excinfo:
        parse_label_file(bad, tmp_path)
    assert excinfo.value.line is not None


def test_missing_name_skipped_and_counted(label_root):
    tmp_path, images = label_root
    entries = [
        {"attributes": {}, "labels": []},
        bdd_entry("a0.jpg", labels=[bdd_car(0, 0, 50, 50)]),
    ]
    labels = write_bdd_labels(tmp_path / "labels.json", entries)
    ds, summary = parse_label_file(labels, images)
    assert len(ds) == 1
    assert summary.skipped_missing_name == 1


def test_missing_image_skipped(label_root):
    tmp_path, images = label_root
    entries = [bdd_entry("nope.jpg"), bdd_entry("a0.jpg")]
    labels = write_bdd_labels(tmp_path / "labels.json", entries)
    ds, summary = parse_label_file(labels, images)
    assert ds.ids() == ["a0"]
    assert summary.skipped_missing_image == 1


def test_unknown_attribute_values_become_undefined(label_root):
    tmp_path, images = label_root
    entry = bdd_entry("a0.jpg", timeofday="dawn/dusk", weather="hail", scene="city street")
    labels = write_bdd_labels(tmp_path / "labels.json", [entry])
    ds, _ = parse_label_file(labels, images)
    attrs = ds.records[0].attributes
    assert attrs.time_of_day is TimeOfDay.DAWN_DUSK
    assert attrs.weather is Weather.UNDEFINED
    assert attrs.scene is Scene.CITY_STREET


def test_entry_order_does_not_matter(label_root):
    tmp_path, images = label_root
    entries = [
        bdd_entry("c2.jpg", labels=[bdd_car(0, 0, 30, 30)]),
        bdd_entry("a0.jpg", labels=[bdd_car(5, 5, 70, 70)]),
        bdd_entry("b1.jpg"),
    ]
    shuffled = list(entries)
    random.Random(7).shuffle(shuffled)
    ds1, _ = parse_label_file(write_bdd_labels(tmp_path / "l1.json", entries), images)
    ds2, _ = parse_label_file(write_bdd_labels(tmp_path / "l2.json", shuffled), images)
    assert ds1.records == ds2.records
    assert ds1.ids() == sorted(ds1.ids())


def test_parse_serialize_parse_fixed_point(label_root, tmp_path):
    _, images = label_root
    entries = [
        bdd_entry("a0.jpg", labels=[bdd_car(10.25, 20.5, 300.125, 400.75, occluded=True)]),
        bdd_entry("b1.jpg", labels=[bdd_car(0, 0, 64, 64, truncated=True)]),
    ]
    labels = write_bdd_labels(tmp_path / "labels.json", entries)
    ds, _ = parse_label_file(labels, images)

    first = save_dataset(ds, tmp_path / "round1.json")
    loaded = load_dataset(first)
    second = save_dataset(loaded, tmp_path / "round2.json")
    assert first.read_bytes() == second.read_bytes()
    assert load_dataset(second) == loaded


def test_duplicate_ids_rejected():
    rec = simple_record("dup", [BoundingBox(0, 0, 10, 10)])
    with pytest.raises(ValidationError):
        LabeledDataset(name="x", records=(rec, rec))


class TestFilter:
    def _ds(self):
        records = [
            dataclasses.replace(
                simple_record("rainy", [BoundingBox(0, 0, 30, 30)]),
                attributes=SceneAttributes(TimeOfDay.DAYTIME, Weather.RAINY, Scene.HIGHWAY)),
            dataclasses.replace(
                simple_record("clear", [BoundingBox(0, 0, 30, 30)]),
                attributes=SceneAttributes(TimeOfDay.DAYTIME, Weather.CLEAR, Scene.HIGHWAY)),
            dataclasses.replace(
                simple_record("empty", []),
                attributes=SceneAttributes(TimeOfDay.DAYTIME, Weather.CLEAR, Scene.HIGHWAY)),
        ]
        return LabeledDataset.from_records("pools", records)

    def test_clear_roads_criteria_exclude_rainy_and_carless(self):
        ds = self._ds()
        out = filter_records(ds, FilterCriteria.clear_roads([TimeOfDay.DAYTIME]))
        assert out.ids() == ["clear"]

    def test_universal_criteria_identity(self):
        ds = self._ds()
        out = filter_records(ds, FilterCriteria.universal())
        assert out.records == ds.records

    def test_idempotent_and_monotone(self):
        ds = self._ds()
        criteria = FilterCriteria.clear_roads([TimeOfDay.DAYTIME])
        once = filter_records(ds, criteria)
        twice = filter_records(once, criteria)
        assert once == twice
        assert len(once) <= len(ds)
        assert all(criteria.matches(r) for r in once.records)


class TestFlagSuspects:
    def _ds(self, tod: TimeOfDay):
        rec = dataclasses.replace(simple_record("img", [BoundingBox(0, 0, 30, 30)]),
                                  attributes=SceneAttributes(time_of_day=tod))
        return LabeledDataset.from_records("d", [rec])

    @staticmethod
    def _loader(value):
        return lambda record: np.full((8, 8, 3), value, dtype=np.uint8)

    def test_black_day_flagged(self):
        flags = flag_suspect_labels(self._ds(TimeOfDay.DAYTIME), self._loader(0))
        assert flags == [("img", "dark-day")]

    def test_white_night_flagged(self):
        flags = flag_suspect_labels(self._ds(TimeOfDay.NIGHT), self._loader(255))
        assert flags == [("img", "bright-night")]

    def test_mid_gray_not_flagged_either_label(self):
        # Rec.601 oracle: 0.299*128 + 0.587*128 + 0.114*128 = 128, inside (50, 150)
        for tod in (TimeOfDay.DAYTIME, TimeOfDay.NIGHT):
            assert flag_suspect_labels(self._ds(tod), self._loader(128)) == []

    def test_decode_failure_reported(self):
        def boom(record):
            raise OSError("broken file")

        flags = flag_suspect_labels(self._ds(TimeOfDay.DAYTIME), boom)
        assert flags == [("img", "decode-failure")]

    def test_parallel_matches_serial(self):
        records = [
            dataclasses.replace(simple_record(f"r{i:02d}", [BoundingBox(0, 0, 30, 30)]),
                                attributes=SceneAttributes(time_of_day=TimeOfDay.DAYTIME))
            for i in range(12)
        ]
        ds = LabeledDataset.from_records("d", records)
        loader = self._loader(10)
        assert flag_suspect_labels(ds, loader) == flag_suspect_labels(ds, loader, jobs=4)
