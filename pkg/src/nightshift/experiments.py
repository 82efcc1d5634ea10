"""Experiment orchestration: pool splitting, training-set composition, and
multi-seed runs through external detector adapters.

An experiment directory is resumable: every finished seed is appended to an
append-only journal (journal.jsonl) and is skipped on re-run, so a crash in a
long adapter training costs one seed, not the whole experiment. Failed seeds
are retried on the next run and never abort their siblings; statistics are
then computed over completed seeds with an explicit completeness warning.
"""
from __future__ import annotations

import dataclasses
import json
import os
import random
import shlex
import shutil
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .datasets import LabeledDataset, SourceImageRecord, load_dataset, save_dataset
from .errors import AdapterError, ValidationError
from .evaluation import (
    DEFAULT_IOU_THRESHOLD,
    evaluate,
    load_detections,
    load_report,
    save_report,
)
from .imaging import file_sha256
from .stats import TTestResult, students_t_test, summarize_runs

DAY_SUBSETS = ("day_train", "day_test")
NIGHT_SUBSETS = ("night_train", "night_test")
SPLIT_SUBSETS = DAY_SUBSETS + NIGHT_SUBSETS


@dataclass(frozen=True)
class SplitPlan:
    """Sizes for the four named subsets, sampled without replacement."""

    seed: int
    subsets: Mapping[str, int]
    total: int | None = None

    def __post_init__(self):
        unknown = set(self.subsets) - set(SPLIT_SUBSETS)
        missing = set(SPLIT_SUBSETS) - set(self.subsets)
        if unknown or missing:
            raise ValidationError(
                f"split plan must name exactly {list(SPLIT_SUBSETS)}; "
                f"missing {sorted(missing)}, unknown {sorted(unknown)}"
            )
        if any(size < 0 for size in self.subsets.values()):
            raise ValidationError("subset sizes must be non-negative")
        if self.total is not None and sum(self.subsets.values()) != self.total:
            raise ValidationError(
                f"subset sizes sum to {sum(self.subsets.values())}, expected {self.total}"
            )

    @classmethod
    def equal_3000(cls, seed: int) -> "SplitPlan":
        """The standard 12000-image plan: 3000 per subset."""
        return cls(seed=seed, subsets={name: 3000 for name in SPLIT_SUBSETS}, total=12000)

    def to_payload(self) -> dict:
        return {"seed": self.seed, "subsets": dict(self.subsets), "total": self.total}


def split_sample(
    pool_day: LabeledDataset, pool_night: LabeledDataset, plan: SplitPlan
) -> dict[str, LabeledDataset]:
    """Seeded sampling without replacement: day pools feed day_train/day_test,
    night pools feed night_train/night_test. Deterministic for a fixed seed."""
    rng = random.Random(plan.seed)
    out: dict[str, LabeledDataset] = {}
    for pool, names in ((pool_day, DAY_SUBSETS), (pool_night, NIGHT_SUBSETS)):
        need = sum(plan.subsets[n] for n in names)
        if need > len(pool.records):
            raise ValidationError(
                f"pool '{pool.name}' has {len(pool.records)} records but the plan "
                f"needs {need} for {list(names)} (short by {need - len(pool.records)})"
            )
        ordered = sorted(pool.records, key=lambda r: r.id)
        picked = rng.sample(ordered, need)
        offset = 0
        for name in names:
            size = plan.subsets[name]
            out[name] = LabeledDataset.from_records(name, picked[offset:offset + size])
            offset += size
    return out


def compose_training_set(parts: Sequence[tuple[str, LabeledDataset]]) -> LabeledDataset:
    """Concatenate datasets, prefixing record ids (and image paths) with the
    source-dataset name so union compositions stay disjoint.

    Ordering is deterministic: source order, then id within each source.
    """
    records: list[SourceImageRecord] = []
    seen: set[str] = set()
    for source_name, ds in parts:
        if not source_name or "/" in source_name:
            raise ValidationError(f"bad source name for composition: {source_name!r}")
        for record in sorted(ds.records, key=lambda r: r.id):
            new_id = f"{source_name}/{record.id}"
            if new_id in seen:
                raise ValidationError(f"duplicate composed record id: {new_id}")
            seen.add(new_id)
            records.append(dataclasses.replace(
                record, id=new_id, image_path=f"{source_name}/{record.image_path}"
            ))
    return LabeledDataset.from_records(
        "+".join(name for name, _ in parts), records, sort=False
    )


def stage_images(
    parts: Sequence[tuple[str, LabeledDataset, Path]], out_dir: Path | str
) -> None:
    """Lay out a composed dataset's images as out_dir/<source>/<path>.

    Symlinks where possible, copies otherwise; existing targets are left
    alone so re-staging is idempotent.
    """
    out_dir = Path(out_dir)
    for source_name, ds, images_root in parts:
        for record in ds.records:
            src = Path(images_root) / record.image_path
            dst = out_dir / source_name / record.image_path
            if dst.exists() or dst.is_symlink():
                continue
            dst.parent.mkdir(parents=True, exist_ok=True)
            try:
                os.symlink(src.resolve(), dst)
            except OSError:
                shutil.copyfile(src, dst)


@dataclass(frozen=True)
class DatasetRef:
    name: str
    dataset: Path
    images: Path


@dataclass(frozen=True)
class ExperimentPlan:
    """One training configuration: which datasets to train on, which to test
    on, and the seeds to repeat with."""

    name: str
    train: tuple[str, ...]
    test: tuple[str, ...]
    seeds: tuple[int, ...]
    adapter: str | None = None

    def __post_init__(self):
        if not self.name or "/" in self.name:
            raise ValidationError(f"bad experiment name: {self.name!r}")
        if not self.train or not self.test:
            raise ValidationError(f"experiment '{self.name}' needs train and test refs")
        if not self.seeds:
            raise ValidationError(f"experiment '{self.name}' has no seeds")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError(f"experiment '{self.name}' repeats seeds")

    def to_payload(self) -> dict:
        return {"name": self.name, "train": list(self.train), "test": list(self.test),
                "seeds": list(self.seeds), "adapter": self.adapter}


@dataclass(frozen=True)
class ExperimentConfig:
    adapter: str
    datasets: Mapping[str, DatasetRef]
    experiments: tuple[ExperimentPlan, ...]
    comparisons: tuple[tuple[str, str], ...] = ()
    iou_threshold: float = DEFAULT_IOU_THRESHOLD

    def __post_init__(self):
        names = [p.name for p in self.experiments]
        if len(set(names)) != len(names):
            raise ValidationError("experiment names must be unique")
        for plan in self.experiments:
            for ref in plan.train + plan.test:
                if ref not in self.datasets:
                    raise ValidationError(
                        f"experiment '{plan.name}' references unknown dataset '{ref}'"
                    )
        for a, b in self.comparisons:
            for name in (a, b):
                if name not in names:
                    raise ValidationError(f"comparison references unknown experiment '{name}'")

    @classmethod
    def from_payload(cls, payload: Mapping, base_dir: Path | str = ".") -> "ExperimentConfig":
        base = Path(base_dir)

        def _resolve(p: object) -> Path:
            path = Path(str(p))
            return path if path.is_absolute() else base / path

        datasets = {
            name: DatasetRef(name=name, dataset=_resolve(ref["dataset"]),
                             images=_resolve(ref["images"]))
            for name, ref in payload.get("datasets", {}).items()
        }
        experiments = tuple(
            ExperimentPlan(
                name=str(e["name"]),
                train=tuple(e["train"]),
                test=tuple(e["test"]),
                seeds=tuple(int(s) for s in e["seeds"]),
                adapter=e.get("adapter"),
            )
            for e in payload.get("experiments", [])
        )
        return cls(
            adapter=str(payload["adapter"]),
            datasets=datasets,
            experiments=experiments,
            comparisons=tuple((str(a), str(b)) for a, b in payload.get("comparisons", [])),
            iou_threshold=float(payload.get("iou_threshold", DEFAULT_IOU_THRESHOLD)),
        )

    @classmethod
    def from_file(cls, path: Path | str) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_payload(json.loads(path.read_text()), base_dir=path.parent)


@dataclass
class SeedOutcome:
    seed: int
    status: str  # "done" | "failed"
    mean_ap: float | None = None
    report_path: str | None = None
    error: str | None = None

    def to_payload(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    outcomes: list[SeedOutcome]
    provenance: dict = field(default_factory=dict)

    @property
    def completed(self) -> list[SeedOutcome]:
        return [o for o in self.outcomes if o.status == "done"]

    @property
    def failed(self) -> list[SeedOutcome]:
        return [o for o in self.outcomes if o.status == "failed"]

    @property
    def maps(self) -> list[float]:
        return [o.mean_ap for o in self.completed if o.mean_ap is not None]

    def to_payload(self) -> dict:
        return {
            "plan": self.plan.to_payload(),
            "outcomes": [o.to_payload() for o in self.outcomes],
            "provenance": self.provenance,
        }


class _Journal:
    """Append-only seed journal with single-writer discipline."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def load(self) -> dict[int, dict]:
        state: dict[int, dict] = {}
        if self.path.is_file():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    entry = json.loads(line)
                    state[int(entry["seed"])] = entry
        return state

    def append(self, entry: dict) -> None:
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _invoke_adapter(argv: list[str], log_path: Path) -> None:
    log_path.parent.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run(argv, capture_output=True, text=True)
    log_path.write_text(proc.stdout + proc.stderr)
    if proc.returncode != 0:
        raise AdapterError(
            f"adapter exited with {proc.returncode}",
            command=" ".join(argv),
            returncode=proc.returncode,
            log_tail=(proc.stdout + proc.stderr)[-2000:],
        )


def _compose_and_stage(
    refs: Sequence[str],
    config: ExperimentConfig,
    dataset_path: Path,
    images_dir: Path,
) -> LabeledDataset:
    parts = []
    stage_parts = []
    for ref_name in refs:
        ref = config.datasets[ref_name]
        ds = load_dataset(ref.dataset)
        parts.append((ref_name, ds))
        stage_parts.append((ref_name, ds, ref.images))
    composed = compose_training_set(parts)
    save_dataset(composed, dataset_path)
    stage_images(stage_parts, images_dir)
    return composed


def run_experiment(
    plan: ExperimentPlan,
    config: ExperimentConfig,
    out_root: Path | str,
    *,
    jobs: int = 1,
) -> ExperimentResult:
    """Run (or resume) one experiment: per seed, train and infer through the
    detector adapter, evaluate the detections, journal the outcome."""
    exp_dir = Path(out_root) / plan.name
    exp_dir.mkdir(parents=True, exist_ok=True)

    train_json = exp_dir / "train_dataset.json"
    test_json = exp_dir / "test_dataset.json"
    train_images = exp_dir / "train_images"
    test_images = exp_dir / "test_images"
    _compose_and_stage(plan.train, config, train_json, train_images)
    test_ds = _compose_and_stage(plan.test, config, test_json, test_images)

    adapter_template = plan.adapter or config.adapter
    adapter_argv = shlex.split(adapter_template)

    journal = _Journal(exp_dir / "journal.jsonl")
    state = journal.load()

    def _seed_done(seed: int) -> bool:
        entry = state.get(seed)
        if not entry or entry.get("status") != "done":
            return False
        report = exp_dir / "seeds" / str(seed) / "eval_report.json"
        return report.is_file()

    def _run_seed(seed: int) -> SeedOutcome:
        seed_dir = exp_dir / "seeds" / str(seed)
        model_dir = seed_dir / "model"
        detections_path = seed_dir / "detections.json"
        try:
            _invoke_adapter(
                adapter_argv + [
                    "train",
                    "--dataset", str(train_json),
                    "--images", str(train_images),
                    "--seed", str(seed),
                    "--model-out", str(model_dir),
                ],
                seed_dir / "train.log",
            )
            _invoke_adapter(
                adapter_argv + [
                    "infer",
                    "--model", str(model_dir),
                    "--dataset", str(test_json),
                    "--images", str(test_images),
                    "--detections-out", str(detections_path),
                ],
                seed_dir / "infer.log",
            )
            dets = load_detections(detections_path)
            report = evaluate(dets, test_ds, config.iou_threshold)
            report_path = save_report(report, seed_dir / "eval_report.json")
        except Exception as exc:  # one failed seed must not kill its siblings
            outcome = SeedOutcome(seed=seed, status="failed", error=str(exc))
            journal.append({"seed": seed, "status": "failed", "error": str(exc)})
            return outcome
        outcome = SeedOutcome(seed=seed, status="done", mean_ap=report.mean_ap,
                              report_path=str(report_path))
        journal.append({"seed": seed, "status": "done", "mean_ap": report.mean_ap})
        return outcome

    pending = [s for s in plan.seeds if not _seed_done(s)]
    fresh: dict[int, SeedOutcome] = {}
    if pending:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for outcome in pool.map(_run_seed, pending):
                    fresh[outcome.seed] = outcome
        else:
            for seed in pending:
                fresh[seed] = _run_seed(seed)

    outcomes: list[SeedOutcome] = []
    for seed in plan.seeds:
        if seed in fresh:
            outcomes.append(fresh[seed])
        else:
            report_path = exp_dir / "seeds" / str(seed) / "eval_report.json"
            report = load_report(report_path)
            outcomes.append(SeedOutcome(seed=seed, status="done", mean_ap=report.mean_ap,
                                        report_path=str(report_path)))

    result = ExperimentResult(
        plan=plan,
        outcomes=outcomes,
        provenance={
            "adapter": adapter_template,
            "train_dataset_sha256": file_sha256(train_json),
            "test_dataset_sha256": file_sha256(test_json),
            "source_datasets": {
                ref_name: {
                    "dataset": str(config.datasets[ref_name].dataset),
                    "sha256": file_sha256(config.datasets[ref_name].dataset),
                }
                for ref_name in sorted(set(plan.train + plan.test))
            },
            "iou_threshold": config.iou_threshold,
        },
    )
    (exp_dir / "result.json").write_text(
        json.dumps(result.to_payload(), indent=2, sort_keys=True) + "\n"
    )
    return result


def summarize_results(
    results: Sequence[ExperimentResult],
    comparisons: Sequence[tuple[str, str]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> dict:
    """Cross-experiment statistics: per-plan mean/std over completed seeds and
    pairwise t-tests for the configured baseline pairs."""
    by_name = {r.plan.name: r for r in results}
    experiments = []
    for result in results:
        maps = result.maps
        mean = std = None
        if len(maps) >= 2:
            mean, std = summarize_runs(maps)
        warning = None
        if result.failed:
            warning = (
                f"{len(result.failed)} of {len(result.plan.seeds)} seeds failed; "
                "statistics cover completed seeds only"
            )
        entry = {
            "name": result.plan.name,
            "train": list(result.plan.train),
            "test": list(result.plan.test),
            "seeds": list(result.plan.seeds),
            "completed_seeds": [o.seed for o in result.completed],
            "failed_seeds": [o.seed for o in result.failed],
            "maps": maps,
            "mean_map": mean,
            "std_map": std,
            "complete": not result.failed,
            "warning": warning,
            "comparisons": [],
        }
        for a, b in comparisons:
            if a != result.plan.name or b not in by_name:
                continue
            other = by_name[b]
            if len(maps) >= 2 and len(other.maps) >= 2:
                test: TTestResult = students_t_test(maps, other.maps)
                entry["comparisons"].append({"other": b, **test.to_payload()})
        experiments.append(entry)
    return {"iou_threshold": iou_threshold, "experiments": experiments}


def run_all(
    config: ExperimentConfig, out_dir: Path | str, *, jobs: int = 1
) -> tuple[list[ExperimentResult], dict]:
    """Run every configured experiment and write the cross-run summary."""
    out_dir = Path(out_dir)
    exp_root = out_dir / "experiments"
    results = [run_experiment(plan, config, exp_root, jobs=jobs)
               for plan in config.experiments]
    summary = summarize_results(results, config.comparisons, config.iou_threshold)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return results, summary
