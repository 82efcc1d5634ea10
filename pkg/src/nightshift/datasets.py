"""Labeled driving-scene datasets.

Parses BDD-style label JSON (array of ``{name, attributes, labels[]}`` entries),
keeps only car boxes, and exposes the canonical dataset JSON consumed by every
other stage: ``{"name": ..., "records": [...]}`` plus optional ``geometry`` and
``provenance`` stanzas.
"""
from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
from PIL import Image

from .errors import LabelParseError, ValidationError
from .imaging import load_image, mean_luma

CAR_CATEGORY = "car"

# Box coordinates are kept continuous in memory; rounding to 3 decimals happens
# only at serialization time.
COORD_DECIMALS = 3


def _normalize_enum_value(raw: object) -> str:
    return str(raw).strip().lower().replace(" ", "_").replace("/", "_").replace("-", "_")


class TimeOfDay(str, Enum):
    DAYTIME = "daytime"
    NIGHT = "night"
    DAWN_DUSK = "dawn_dusk"
    UNDEFINED = "undefined"


class Weather(str, Enum):
    RAINY = "rainy"
    SNOWY = "snowy"
    CLEAR = "clear"
    OVERCAST = "overcast"
    PARTLY_CLOUDY = "partly_cloudy"
    FOGGY = "foggy"
    UNDEFINED = "undefined"


class Scene(str, Enum):
    TUNNEL = "tunnel"
    RESIDENTIAL = "residential"
    PARKING_LOT = "parking_lot"
    CITY_STREET = "city_street"
    GAS_STATIONS = "gas_stations"
    HIGHWAY = "highway"
    UNDEFINED = "undefined"


def _parse_enum(enum_cls, raw: object):
    """Map a raw attribute value onto the enum; unknown values become UNDEFINED."""
    if raw is None:
        return enum_cls.UNDEFINED
    try:
        return enum_cls(_normalize_enum_value(raw))
    except ValueError:
        return enum_cls.UNDEFINED


@dataclass(frozen=True)
class SceneAttributes:
    """Per-image scene attributes (unknown raw values parse to `undefined`)."""

    time_of_day: TimeOfDay = TimeOfDay.UNDEFINED
    weather: Weather = Weather.UNDEFINED
    scene: Scene = Scene.UNDEFINED

    @classmethod
    def from_raw(cls, raw: Mapping | None) -> "SceneAttributes":
        raw = raw or {}
        return cls(
            time_of_day=_parse_enum(TimeOfDay, raw.get("timeofday", raw.get("time_of_day"))),
            weather=_parse_enum(Weather, raw.get("weather")),
            scene=_parse_enum(Scene, raw.get("scene")),
        )

    def to_payload(self) -> dict:
        return {
            "time_of_day": self.time_of_day.value,
            "weather": self.weather.value,
            "scene": self.scene.value,
        }


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, origin top-left, x1<x2 and y1<y2."""

    x1: float
    y1: float
    x2: float
    y2: float
    occluded: bool = False
    truncated: bool = False
    category: str = CAR_CATEGORY

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def min_side(self) -> float:
        return min(self.width, self.height)

    @property
    def area(self) -> float:
        return self.width * self.height

    def clamped(self, width: float, height: float) -> "BoundingBox | None":
        """Clamp to [0, width] x [0, height]; None if nothing remains."""
        x1 = min(max(self.x1, 0.0), float(width))
        y1 = min(max(self.y1, 0.0), float(height))
        x2 = min(max(self.x2, 0.0), float(width))
        y2 = min(max(self.y2, 0.0), float(height))
        if x1 >= x2 or y1 >= y2:
            return None
        return dataclasses.replace(self, x1=x1, y1=y1, x2=x2, y2=y2)

    def to_payload(self) -> dict:
        return {
            "x1": round(self.x1, COORD_DECIMALS),
            "y1": round(self.y1, COORD_DECIMALS),
            "x2": round(self.x2, COORD_DECIMALS),
            "y2": round(self.y2, COORD_DECIMALS),
            "occluded": self.occluded,
            "truncated": self.truncated,
            "category": self.category,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "BoundingBox":
        return cls(
            x1=float(payload["x1"]),
            y1=float(payload["y1"]),
            x2=float(payload["x2"]),
            y2=float(payload["y2"]),
            occluded=bool(payload.get("occluded", False)),
            truncated=bool(payload.get("truncated", False)),
            category=str(payload.get("category", CAR_CATEGORY)),
        )


def box_sort_key(box: BoundingBox) -> str:
    """Canonical serialization of a box, used for deterministic tie-breaking."""
    return json.dumps(box.to_payload(), sort_keys=True)


@dataclass(frozen=True)
class SourceImageRecord:
    """One labeled image: dimensions, scene attributes, car boxes, provenance id."""

    id: str
    width: int
    height: int
    attributes: SceneAttributes
    boxes: tuple[BoundingBox, ...]
    image_path: str

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "attributes": self.attributes.to_payload(),
            "boxes": [b.to_payload() for b in self.boxes],
            "image_path": self.image_path,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "SourceImageRecord":
        attrs = payload.get("attributes", {})
        return cls(
            id=str(payload["id"]),
            width=int(payload["width"]),
            height=int(payload["height"]),
            attributes=SceneAttributes(
                time_of_day=_parse_enum(TimeOfDay, attrs.get("time_of_day")),
                weather=_parse_enum(Weather, attrs.get("weather")),
                scene=_parse_enum(Scene, attrs.get("scene")),
            ),
            boxes=tuple(BoundingBox.from_payload(b) for b in payload.get("boxes", [])),
            image_path=str(payload["image_path"]),
        )

    def car_count(self) -> int:
        return sum(1 for b in self.boxes if b.category == CAR_CATEGORY)


@dataclass(frozen=True)
class LabeledDataset:
    """Ordered collection of records with unique ids.

    `geometry` and `provenance` are optional metadata stanzas carried through
    the canonical JSON; they do not participate in equality.
    """

    name: str
    records: tuple[SourceImageRecord, ...]
    geometry: Mapping | None = field(default=None, compare=False)
    provenance: Mapping | None = field(default=None, compare=False)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate record ids in dataset '{self.name}': {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @classmethod
    def from_records(cls, name: str, records: Iterable[SourceImageRecord],
                     *, sort: bool = True, geometry: Mapping | None = None,
                     provenance: Mapping | None = None) -> "LabeledDataset":
        recs = tuple(sorted(records, key=lambda r: r.id)) if sort else tuple(records)
        return cls(name=name, records=recs, geometry=geometry, provenance=provenance)


def dataset_to_payload(ds: LabeledDataset) -> dict:
    payload: dict = {"name": ds.name, "records": [r.to_payload() for r in ds.records]}
    if ds.geometry is not None:
        payload["geometry"] = dict(ds.geometry)
    if ds.provenance is not None:
        payload["provenance"] = dict(ds.provenance)
    return payload


def save_dataset(ds: LabeledDataset, path: Path | str) -> Path:
    """Write canonical dataset JSON (stable key order, trailing newline)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dataset_to_payload(ds), indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path: Path | str) -> LabeledDataset:
    """Load canonical dataset JSON, preserving stored record order."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LabelParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(payload, dict) or "records" not in payload:
        raise LabelParseError(f"{path}: not a canonical dataset file")
    records = tuple(SourceImageRecord.from_payload(r) for r in payload["records"])
    return LabeledDataset(
        name=str(payload.get("name", Path(path).stem)),
        records=records,
        geometry=payload.get("geometry"),
        provenance=payload.get("provenance"),
    )


@dataclass
class ParseSummary:
    """Counts of entries/labels dropped while parsing a label file."""

    entries_total: int = 0
    records_kept: int = 0
    skipped_missing_name: int = 0
    skipped_missing_image: int = 0
    skipped_malformed: int = 0
    non_car_labels: int = 0
    boxes_clamped: int = 0
    boxes_dropped_degenerate: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


def _resolve_image(image_root: Path, name: str) -> Path | None:
    candidate = image_root / name
    if candidate.is_file():
        return candidate
    if not Path(name).suffix:
        for suffix in _IMAGE_SUFFIXES:
            candidate = image_root / f"{name}{suffix}"
            if candidate.is_file():
                return candidate
    return None


def parse_label_file(path: Path | str, image_root: Path | str) -> tuple[LabeledDataset, ParseSummary]:
    """Parse a BDD-style label JSON array into a LabeledDataset.

    Keeps only entries whose image file exists under `image_root`; drops
    non-car labels; clamps boxes to image bounds (degenerate remainders are
    dropped and counted). Records come out sorted by id, so the result does
    not depend on the input file's entry order.

    Raises:
        LabelParseError: malformed JSON (with line/column) or wrong top-level shape.
        ValidationError: duplicate image ids.
    """
    path = Path(path)
    image_root = Path(image_root)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LabelParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(entries, list):
        raise LabelParseError(f"{path}: top level must be a JSON array of labeled images")

    summary = ParseSummary(entries_total=len(entries))
    records: list[SourceImageRecord] = []
    for entry in entries:
        if not isinstance(entry, dict):
            summary.skipped_malformed += 1
            continue
        name = entry.get("name")
        if not name or not isinstance(name, str):
            summary.skipped_missing_name += 1
            continue
        image_file = _resolve_image(image_root, name)
        if image_file is None:
            summary.skipped_missing_image += 1
            continue
        with Image.open(image_file) as img:
            width, height = img.size

        boxes: list[BoundingBox] = []
        for label in entry.get("labels") or []:
            if not isinstance(label, dict):
                summary.skipped_malformed += 1
                continue
            if label.get("category") != CAR_CATEGORY:
                summary.non_car_labels += 1
                continue
            box2d = label.get("box2d")
            if not box2d:
                summary.skipped_malformed += 1
                continue
            attrs = label.get("attributes") or {}
            raw = (float(box2d["x1"]), float(box2d["y1"]),
                   float(box2d["x2"]), float(box2d["y2"]))
            clamped = _clamp_coords(*raw, width, height)
            if clamped is None:
                summary.boxes_dropped_degenerate += 1
                continue
            if clamped != raw:
                summary.boxes_clamped += 1
            boxes.append(BoundingBox(
                x1=clamped[0], y1=clamped[1], x2=clamped[2], y2=clamped[3],
                occluded=bool(attrs.get("occluded", False)),
                truncated=bool(attrs.get("truncated", False)),
            ))

        records.append(SourceImageRecord(
            id=Path(name).stem,
            width=width,
            height=height,
            attributes=SceneAttributes.from_raw(entry.get("attributes")),
            boxes=tuple(boxes),
            image_path=image_file.relative_to(image_root).as_posix(),
        ))

    summary.records_kept = len(records)
    return LabeledDataset.from_records(path.stem, records), summary


def _clamp_coords(x1: float, y1: float, x2: float, y2: float,
                  width: float, height: float) -> tuple[float, float, float, float] | None:
    x1 = min(max(x1, 0.0), float(width))
    y1 = min(max(y1, 0.0), float(height))
    x2 = min(max(x2, 0.0), float(width))
    y2 = min(max(y2, 0.0), float(height))
    if x1 >= x2 or y1 >= y2:
        return None
    return (x1, y1, x2, y2)


@dataclass(frozen=True)
class FilterCriteria:
    """Allowed attribute sets plus a minimum car count."""

    time_of_day: frozenset[TimeOfDay]
    weather: frozenset[Weather]
    scene: frozenset[Scene]
    min_cars: int = 0

    @classmethod
    def clear_roads(cls, time_of_day: Iterable[TimeOfDay]) -> "FilterCriteria":
        """Clear or partly-cloudy weather, road scenes (highway, city street,
        residential), at least one car; `time_of_day` selects the domain."""
        return cls(
            time_of_day=frozenset(time_of_day),
            weather=frozenset({Weather.CLEAR, Weather.PARTLY_CLOUDY}),
            scene=frozenset({Scene.HIGHWAY, Scene.CITY_STREET, Scene.RESIDENTIAL}),
            min_cars=1,
        )

    @classmethod
    def universal(cls) -> "FilterCriteria":
        return cls(
            time_of_day=frozenset(TimeOfDay),
            weather=frozenset(Weather),
            scene=frozenset(Scene),
            min_cars=0,
        )

    def matches(self, record: SourceImageRecord) -> bool:
        return (
            record.attributes.time_of_day in self.time_of_day
            and record.attributes.weather in self.weather
            and record.attributes.scene in self.scene
            and record.car_count() >= self.min_cars
        )


def filter_records(ds: LabeledDataset, criteria: FilterCriteria) -> LabeledDataset:
    """Keep exactly the records matching all attribute sets and the car minimum."""
    return LabeledDataset.from_records(
        ds.name, (r for r in ds.records if criteria.matches(r)), sort=False,
        geometry=ds.geometry, provenance=ds.provenance,
    )


ImageLoader = Callable[[SourceImageRecord], np.ndarray]


def make_image_loader(images_root: Path | str) -> ImageLoader:
    root = Path(images_root)

    def _load(record: SourceImageRecord) -> np.ndarray:
        return load_image(root / record.image_path)

    return _load


def flag_suspect_labels(
    ds: LabeledDataset,
    image_loader: ImageLoader,
    *,
    dark_day_below: float = 50.0,
    bright_night_above: float = 150.0,
    jobs: int = 1,
) -> list[tuple[str, str]]:
    """Flag records whose mean luma contradicts their day/night label.

    A review aid for the mislabeled-image problem: day-labeled images darker
    than `dark_day_below` are flagged "dark-day", night-labeled images
    brighter than `bright_night_above` are flagged "bright-night". Undecodable
    images yield a "decode-failure" entry. The dataset is never mutated.
    """
    candidates = [
        r for r in ds.records
        if r.attributes.time_of_day in (TimeOfDay.DAYTIME, TimeOfDay.NIGHT)
    ]

    def _inspect(record: SourceImageRecord) -> tuple[str, str] | None:
        try:
            luma = mean_luma(image_loader(record))
        except Exception:
            return (record.id, "decode-failure")
        if record.attributes.time_of_day is TimeOfDay.DAYTIME and luma < dark_day_below:
            return (record.id, "dark-day")
        if record.attributes.time_of_day is TimeOfDay.NIGHT and luma > bright_night_above:
            return (record.id, "bright-night")
        return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_inspect, candidates))
    else:
        results = [_inspect(r) for r in candidates]
    return sorted(r for r in results if r is not None)
