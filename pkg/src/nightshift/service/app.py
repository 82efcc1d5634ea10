"""FastAPI service wrapping the pipeline. Every operation works on files the
service host can reach; responses carry summaries and output paths."""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..datasets import (
    FilterCriteria,
    Scene,
    TimeOfDay,
    Weather,
    filter_records,
    flag_suspect_labels,
    load_dataset,
    make_image_loader,
    parse_label_file,
    save_dataset,
)
from ..errors import NightshiftError, ValidationError
from ..evaluation import evaluate, load_detections, report_csv_rows, save_report
from ..experiments import (
    ExperimentConfig,
    SplitPlan,
    compose_training_set,
    run_all,
    split_sample,
    stage_images,
)
from ..geometry import CropSpec, PruneSpec, ResizeSpec, prepare_dataset
from ..report import render_report
from ..translate import (
    TranslatorKind,
    TranslatorSpec,
    assemble_fake_dataset,
    audit_builtin_roundtrip,
    run_builtin_translation,
    run_external_translation,
)
from . import models


def _enum_set(enum_cls, values):
    parsed = set()
    for value in values:
        try:
            parsed.add(enum_cls(value))
        except ValueError:
            allowed = [e.value for e in enum_cls]
            raise ValidationError(f"unknown {enum_cls.__name__} value {value!r}; "
                                  f"allowed: {allowed}")
    return frozenset(parsed)


def create_app() -> FastAPI:
    app = FastAPI(title="nightshift", version=__version__)

    @app.exception_handler(NightshiftError)
    async def _pipeline_error(request: Request, exc: NightshiftError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": f"file not found: {exc}"})

    @app.get("/health", response_model=models.HealthResponse)
    def health() -> models.HealthResponse:
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/datasets/prepare", response_model=models.PrepareResponse)
    def prepare(req: models.PrepareRequest) -> models.PrepareResponse:
        parsed, summary = parse_label_file(req.labels_path, req.image_root)
        criteria = FilterCriteria(
            time_of_day=_enum_set(TimeOfDay, req.time_of_day),
            weather=(_enum_set(Weather, req.weather) if req.weather is not None
                     else frozenset({Weather.CLEAR, Weather.PARTLY_CLOUDY})),
            scene=(_enum_set(Scene, req.scene) if req.scene is not None
                   else frozenset({Scene.HIGHWAY, Scene.CITY_STREET, Scene.RESIDENTIAL})),
            min_cars=req.min_cars,
        )
        filtered = filter_records(parsed, criteria)
        flagged = []
        if req.flag_suspects:
            flagged = flag_suspect_labels(
                filtered, make_image_loader(req.image_root), jobs=req.jobs
            )

        out_dir = Path(req.out_dir)
        images_dir = out_dir / "images"
        prepared, dropped_empty = prepare_dataset(
            filtered, req.image_root, images_dir,
            CropSpec(side=req.crop_side, horizontal_anchor=req.horizontal_anchor),
            ResizeSpec(target_side=req.target_side),
            PruneSpec(min_side=req.prune_min_side,
                      min_side_occluded=req.prune_min_side_occluded),
            drop_empty=req.min_cars >= 1,
        )
        name = req.dataset_name or prepared.name
        prepared = dataclasses.replace(prepared, name=name)
        dataset_path = save_dataset(prepared, out_dir / f"{name}.json")
        return models.PrepareResponse(
            dataset_path=str(dataset_path),
            images_dir=str(images_dir),
            records=len(prepared),
            boxes=sum(len(r.boxes) for r in prepared.records),
            filtered_out=len(parsed) - len(filtered),
            dropped_empty=dropped_empty,
            parse_summary=summary.as_dict(),
            flagged=[[record_id, reason] for record_id, reason in flagged],
        )

    @app.post("/datasets/split", response_model=models.SplitResponse)
    def split(req: models.SplitRequest) -> models.SplitResponse:
        plan = SplitPlan(seed=req.seed, subsets=req.subsets)
        subsets = split_sample(
            load_dataset(req.day_dataset), load_dataset(req.night_dataset), plan
        )
        out_dir = Path(req.out_dir)
        paths = {name: str(save_dataset(ds, out_dir / f"{name}.json"))
                 for name, ds in subsets.items()}
        return models.SplitResponse(
            datasets=paths, sizes={name: len(ds) for name, ds in subsets.items()}
        )

    @app.post("/translate", response_model=models.TranslateResponse)
    def translate(req: models.TranslateRequest) -> models.TranslateResponse:
        ds = load_dataset(req.dataset)
        spec = TranslatorSpec.from_payload(req.translator.model_dump())
        out_dir = Path(req.out_dir)
        audit_payload = None
        if spec.kind is TranslatorKind.BUILTIN_PHOTOMETRIC:
            params = spec.photometric_params()
            manifest = run_builtin_translation(ds, req.images_dir, out_dir, params,
                                               jobs=req.jobs)
            manifest_path = out_dir / "manifest.json"
            manifest_path.write_text(
                json.dumps(manifest.to_payload(), indent=2, sort_keys=True) + "\n"
            )
            if req.audit:
                audit = audit_builtin_roundtrip(
                    ds, req.images_dir, params,
                    sample_size=req.audit_sample,
                    threshold=req.audit_threshold,
                    seed=req.audit_seed,
                )
                audit_payload = audit.to_payload()
        else:
            manifest = run_external_translation(
                ds, req.images_dir, spec, out_dir, log_path=out_dir / "translator.log"
            )
            manifest_path = out_dir / "manifest.json"
        return models.TranslateResponse(
            manifest_path=str(manifest_path),
            translated=len(manifest.entries),
            audit=audit_payload,
        )

    @app.post("/datasets/assemble", response_model=models.AssembleResponse)
    def assemble(req: models.AssembleRequest) -> models.AssembleResponse:
        day_ds = load_dataset(req.day_dataset)
        spec = TranslatorSpec.from_payload(req.translator.model_dump())
        fake = assemble_fake_dataset(day_ds, req.translated_dir, spec, name=req.name)
        dataset_path = save_dataset(fake, req.out_dataset)
        return models.AssembleResponse(dataset_path=str(dataset_path), records=len(fake))

    @app.post("/datasets/compose", response_model=models.ComposeResponse)
    def compose(req: models.ComposeRequest) -> models.ComposeResponse:
        loaded = [(part.name, load_dataset(part.dataset)) for part in req.parts]
        composed = compose_training_set(loaded)
        stage_images(
            [(part.name, ds, Path(part.images))
             for part, (_, ds) in zip(req.parts, loaded)],
            req.out_images,
        )
        dataset_path = save_dataset(composed, req.out_dataset)
        return models.ComposeResponse(
            dataset_path=str(dataset_path),
            images_dir=str(req.out_images),
            records=len(composed),
        )

    @app.post("/evaluate", response_model=models.EvaluateResponse)
    def evaluate_endpoint(req: models.EvaluateRequest) -> models.EvaluateResponse:
        dets = load_detections(req.detections)
        ds = load_dataset(req.dataset)
        report = evaluate(dets, ds, req.iou_threshold)
        if req.out_json:
            save_report(report, req.out_json)
        if req.out_csv:
            out_csv = Path(req.out_csv)
            out_csv.parent.mkdir(parents=True, exist_ok=True)
            with open(out_csv, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerows(report_csv_rows(report))
        return models.EvaluateResponse(**report.to_payload())

    @app.post("/experiments/run", response_model=models.ExperimentResponse)
    def run_experiments(req: models.ExperimentRequest) -> models.ExperimentResponse:
        if req.config_path:
            config = ExperimentConfig.from_file(req.config_path)
        elif req.config is not None:
            config = ExperimentConfig.from_payload(req.config)
        else:
            raise ValidationError("experiment request needs config_path or inline config")
        out_dir = Path(req.out_dir)
        _, summary = run_all(config, out_dir, jobs=req.jobs)
        return models.ExperimentResponse(
            out_dir=str(out_dir),
            summary_path=str(out_dir / "summary.json"),
            experiments=summary["experiments"],
        )

    @app.post("/reports/render", response_model=models.ReportResponse)
    def render(req: models.ReportRequest) -> models.ReportResponse:
        summary = json.loads(Path(req.summary_path).read_text())
        files = render_report(summary, req.out_dir)
        return models.ReportResponse(files=[str(p) for p in files])

    return app
