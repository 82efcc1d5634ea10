"""Request/response models for the pipeline service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class TranslatorSpecModel(BaseModel):
    kind: str = "builtin_photometric"
    parameters: dict = Field(default_factory=dict)


class PrepareRequest(BaseModel):
    labels_path: str
    image_root: str
    out_dir: str
    dataset_name: str | None = None
    time_of_day: list[str] = Field(default_factory=lambda: ["daytime"])
    weather: list[str] | None = None  # None -> clear/partly_cloudy
    scene: list[str] | None = None    # None -> highway/city_street/residential
    min_cars: int = 1
    crop_side: int = 720
    horizontal_anchor: float = 0.5
    target_side: int = 256
    prune_min_side: float = 20.0
    prune_min_side_occluded: float = 30.0
    flag_suspects: bool = False
    jobs: int = 1


class PrepareResponse(BaseModel):
    dataset_path: str
    images_dir: str
    records: int
    boxes: int
    filtered_out: int
    dropped_empty: int
    parse_summary: dict
    flagged: list[list[str]] = Field(default_factory=list)


class SplitRequest(BaseModel):
    day_dataset: str
    night_dataset: str
    out_dir: str
    seed: int = 0
    subsets: dict[str, int] = Field(
        default_factory=lambda: {
            "day_train": 3000, "day_test": 3000, "night_train": 3000, "night_test": 3000,
        }
    )


class SplitResponse(BaseModel):
    datasets: dict[str, str]
    sizes: dict[str, int]


class TranslateRequest(BaseModel):
    dataset: str
    images_dir: str
    out_dir: str
    translator: TranslatorSpecModel = Field(default_factory=TranslatorSpecModel)
    jobs: int = 1
    audit: bool = True
    audit_sample: int = 16
    audit_threshold: float = 25.0
    audit_seed: int = 0


class TranslateResponse(BaseModel):
    manifest_path: str
    translated: int
    audit: dict | None = None


class AssembleRequest(BaseModel):
    day_dataset: str
    translated_dir: str
    out_dataset: str
    translator: TranslatorSpecModel = Field(default_factory=TranslatorSpecModel)
    name: str | None = None


class AssembleResponse(BaseModel):
    dataset_path: str
    records: int


class ComposePart(BaseModel):
    name: str
    dataset: str
    images: str


class ComposeRequest(BaseModel):
    parts: list[ComposePart]
    out_dataset: str
    out_images: str


class ComposeResponse(BaseModel):
    dataset_path: str
    images_dir: str
    records: int


class EvaluateRequest(BaseModel):
    detections: str
    dataset: str
    iou_threshold: float = 0.5
    out_json: str | None = None
    out_csv: str | None = None


class EvaluateResponse(BaseModel):
    ap: dict[str, float]
    mean_ap: float
    tp: int
    fp: int
    fn: int
    iou_threshold: float


class ExperimentRequest(BaseModel):
    out_dir: str
    config_path: str | None = None
    config: dict | None = None  # inline alternative to config_path
    jobs: int = 1


class ExperimentResponse(BaseModel):
    out_dir: str
    summary_path: str
    experiments: list[dict]


class ReportRequest(BaseModel):
    summary_path: str
    out_dir: str


class ReportResponse(BaseModel):
    files: list[str]
