"""Fake-night dataset production.

A translator turns every day image into a night-looking one; annotations are
then transferred verbatim (the whole point: the translation changes appearance,
not geometry). Two translator kinds exist: a builtin photometric baseline that
runs anywhere, and an external adapter invoked once per manifest.

The cycle-reconstruction error (mean |round-trip - original|) audits whether a
translator pair preserves structure well enough to justify the transfer.
"""
from __future__ import annotations

import dataclasses
import json
import random
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .datasets import LabeledDataset, SourceImageRecord
from .errors import AdapterError, TranslationError, ValidationError
from .imaging import file_sha256, load_image, require_rgb8, save_image

# Extra attenuation applied to the top row of the sky band; rows below blend
# linearly back to 1.0 at the bottom of the band.
SKY_FLOOR = 0.15

DEFAULT_CYCLE_THRESHOLD = 25.0


class TranslatorKind(str, Enum):
    BUILTIN_PHOTOMETRIC = "builtin_photometric"
    EXTERNAL = "external"


@dataclass(frozen=True)
class PhotometricParams:
    """Builtin day-to-night parameters: per-channel v' = 255 (v/255)^gamma gain_c,
    with the top `sky_darken` fraction of rows attenuated toward SKY_FLOOR."""

    gamma: float = 2.2
    gains: tuple[float, float, float] = (0.30, 0.35, 0.55)
    sky_darken: float = 0.35

    def __post_init__(self):
        if not 1.0 <= self.gamma <= 4.0:
            raise ValidationError(f"gamma must lie in [1, 4], got {self.gamma}")
        if len(self.gains) != 3 or any(not 0.0 <= g <= 1.5 for g in self.gains):
            raise ValidationError(f"gains must be three values in [0, 1.5], got {self.gains}")
        if not 0.0 <= self.sky_darken <= 1.0:
            raise ValidationError(f"sky_darken must lie in [0, 1], got {self.sky_darken}")

    def to_payload(self) -> dict:
        return {"gamma": self.gamma, "gains": list(self.gains), "sky_darken": self.sky_darken}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "PhotometricParams":
        return cls(
            gamma=float(payload.get("gamma", 2.2)),
            gains=tuple(float(g) for g in payload.get("gains", (0.30, 0.35, 0.55))),
            sky_darken=float(payload.get("sky_darken", 0.35)),
        )


@dataclass(frozen=True)
class TranslatorSpec:
    kind: TranslatorKind
    parameters: Mapping = field(default_factory=dict)

    def photometric_params(self) -> PhotometricParams:
        if self.kind is not TranslatorKind.BUILTIN_PHOTOMETRIC:
            raise ValidationError(f"translator kind {self.kind.value} has no photometric params")
        return PhotometricParams.from_payload(self.parameters)

    def command(self) -> str:
        if self.kind is not TranslatorKind.EXTERNAL:
            raise ValidationError(f"translator kind {self.kind.value} has no command template")
        command = self.parameters.get("command")
        if not command:
            raise ValidationError("external translator spec needs a 'command' template")
        return str(command)

    def to_payload(self) -> dict:
        if self.kind is TranslatorKind.BUILTIN_PHOTOMETRIC:
            return {"kind": self.kind.value, "parameters": self.photometric_params().to_payload()}
        return {"kind": self.kind.value, "parameters": dict(self.parameters)}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "TranslatorSpec":
        kind = TranslatorKind(payload["kind"])
        spec = cls(kind=kind, parameters=dict(payload.get("parameters", {})))
        if kind is TranslatorKind.BUILTIN_PHOTOMETRIC:
            spec.photometric_params()  # validate ranges now
        return spec

    @classmethod
    def builtin(cls, params: PhotometricParams | None = None) -> "TranslatorSpec":
        params = params or PhotometricParams()
        return cls(kind=TranslatorKind.BUILTIN_PHOTOMETRIC, parameters=params.to_payload())


def _row_gain_factors(height: int, sky_darken: float) -> np.ndarray:
    """Per-row multiplier: SKY_FLOOR at row 0 rising linearly to 1.0 at the
    bottom of the sky band, 1.0 below it."""
    factors = np.ones(height, dtype=np.float64)
    n_sky = int(round(sky_darken * height))
    if n_sky > 0:
        rows = np.arange(n_sky, dtype=np.float64)
        factors[:n_sky] = SKY_FLOOR + (1.0 - SKY_FLOOR) * rows / n_sky
    return factors


def builtin_day_to_night(pixels: np.ndarray, params: PhotometricParams | None = None) -> np.ndarray:
    """Photometric day-to-night stand-in: gamma curve, per-channel gains, sky
    band attenuation. Purely per-pixel; geometry is never altered."""
    params = params or PhotometricParams()
    require_rgb8(pixels)
    height = pixels.shape[0]
    gains = np.asarray(params.gains, dtype=np.float64)
    rows = _row_gain_factors(height, params.sky_darken)[:, None, None]
    out = 255.0 * np.power(pixels.astype(np.float64) / 255.0, params.gamma)
    out = out * gains[None, None, :] * rows
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def builtin_night_to_day(pixels: np.ndarray, params: PhotometricParams | None = None) -> np.ndarray:
    """Analytic inverse of `builtin_day_to_night` (gamma and gain inversion,
    ignoring quantization). Zero effective gain maps to 0."""
    params = params or PhotometricParams()
    require_rgb8(pixels)
    height = pixels.shape[0]
    gains = np.asarray(params.gains, dtype=np.float64)
    eff = gains[None, None, :] * _row_gain_factors(height, params.sky_darken)[:, None, None]
    eff = np.broadcast_to(eff, pixels.shape)
    safe = np.where(eff > 0.0, eff, 1.0)
    ratio = np.clip(pixels.astype(np.float64) / (255.0 * safe), 0.0, 1.0)
    out = np.where(eff > 0.0, 255.0 * np.power(ratio, 1.0 / params.gamma), 0.0)
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def cycle_consistency_error(original: np.ndarray, reconstructed: np.ndarray) -> float:
    """Mean absolute per-channel-pixel difference in 8-bit units."""
    require_rgb8(original)
    require_rgb8(reconstructed)
    if original.shape != reconstructed.shape:
        raise ValidationError(
            f"cycle error needs equal shapes, got {original.shape} vs {reconstructed.shape}"
        )
    return float(np.mean(np.abs(original.astype(np.float64) - reconstructed.astype(np.float64))))


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    source_file: str
    expected_output_file: str
    sha256: str

    def to_payload(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TranslationManifest:
    """Work order handed to a translator process: one entry per image, plus a
    checksum of each source so runs are auditable."""

    direction: str
    source_dir: str
    output_dir: str
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        outputs = [e.expected_output_file for e in self.entries]
        if len(set(ids)) != len(ids) or len(set(outputs)) != len(outputs):
            raise ValidationError("manifest entries must be bijective (unique ids and outputs)")

    def to_payload(self) -> dict:
        return {
            "direction": self.direction,
            "source_dir": self.source_dir,
            "output_dir": self.output_dir,
            "entries": [e.to_payload() for e in self.entries],
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "TranslationManifest":
        return cls(
            direction=str(payload["direction"]),
            source_dir=str(payload["source_dir"]),
            output_dir=str(payload["output_dir"]),
            entries=tuple(
                ManifestEntry(
                    id=str(e["id"]),
                    source_file=str(e["source_file"]),
                    expected_output_file=str(e["expected_output_file"]),
                    sha256=str(e["sha256"]),
                )
                for e in payload["entries"]
            ),
        )


def save_manifest(manifest: TranslationManifest, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_payload(), indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: Path | str) -> TranslationManifest:
    return TranslationManifest.from_payload(json.loads(Path(path).read_text()))


def build_manifest(
    ds: LabeledDataset,
    images_dir: Path | str,
    output_dir: Path | str,
    direction: str = "day_to_night",
) -> TranslationManifest:
    """One entry per record, sorted by id; outputs are `<id>.png` under
    `output_dir`."""
    images_dir = Path(images_dir)
    output_dir = Path(output_dir)
    entries = []
    for record in sorted(ds.records, key=lambda r: r.id):
        source = images_dir / record.image_path
        if not source.is_file():
            raise TranslationError("manifest source image missing", ids=[record.id])
        entries.append(ManifestEntry(
            id=record.id,
            source_file=str(source),
            expected_output_file=str(output_dir / f"{record.id}.png"),
            sha256=file_sha256(source),
        ))
    return TranslationManifest(
        direction=direction,
        source_dir=str(images_dir),
        output_dir=str(output_dir),
        entries=tuple(entries),
    )


def verify_manifest_outputs(manifest: TranslationManifest) -> None:
    """Every expected output must exist, decode, and match its source's
    dimensions; otherwise raise TranslationError naming the offending ids."""
    bad: list[str] = []
    for entry in manifest.entries:
        out_path = Path(entry.expected_output_file)
        if not out_path.is_file():
            bad.append(entry.id)
            continue
        try:
            out_pixels = load_image(out_path)
            src_pixels = load_image(entry.source_file)
        except Exception:
            bad.append(entry.id)
            continue
        if out_pixels.shape != src_pixels.shape:
            bad.append(entry.id)
    if bad:
        raise TranslationError("translation outputs missing or inconsistent", ids=sorted(bad))


def run_builtin_translation(
    ds: LabeledDataset,
    images_dir: Path | str,
    output_dir: Path | str,
    params: PhotometricParams | None = None,
    *,
    jobs: int = 1,
) -> TranslationManifest:
    """Apply the builtin photometric translator to every record."""
    params = params or PhotometricParams()
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(ds, images_dir, output_dir)

    def _translate(entry: ManifestEntry) -> None:
        pixels = load_image(entry.source_file)
        save_image(builtin_day_to_night(pixels, params), entry.expected_output_file)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_translate, manifest.entries))
    else:
        for entry in manifest.entries:
            _translate(entry)
    verify_manifest_outputs(manifest)
    return manifest


def run_external_translation(
    ds: LabeledDataset,
    images_dir: Path | str,
    spec: TranslatorSpec,
    output_dir: Path | str,
    *,
    log_path: Path | str | None = None,
) -> TranslationManifest:
    """Write a manifest, invoke the external translator once over it
    (`<command> --manifest <path>`), then verify every expected output."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(ds, images_dir, output_dir)
    manifest_path = save_manifest(manifest, output_dir / "manifest.json")

    argv = shlex.split(spec.command()) + ["--manifest", str(manifest_path)]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(proc.stdout + proc.stderr)
    if proc.returncode != 0:
        raise AdapterError(
            f"external translator exited with {proc.returncode}",
            command=" ".join(argv),
            returncode=proc.returncode,
            log_tail=(proc.stdout + proc.stderr)[-2000:],
        )
    verify_manifest_outputs(manifest)
    return manifest


def assemble_fake_dataset(
    day_ds: LabeledDataset,
    translated_dir: Path | str,
    spec: TranslatorSpec,
    *,
    name: str | None = None,
) -> LabeledDataset:
    """Pair translated images with the day dataset's annotations, verbatim.

    Record ids and boxes are identical to the source; image paths point into
    `translated_dir`; each translated image must exist with the source's
    dimensions. Provenance records the translator and source dataset.
    """
    translated_dir = Path(translated_dir)
    missing: list[str] = []
    records: list[SourceImageRecord] = []
    for record in day_ds.records:
        image_name = f"{record.id}.png"
        path = translated_dir / image_name
        if not path.is_file():
            missing.append(record.id)
            continue
        try:
            pixels = load_image(path)
        except Exception:
            missing.append(record.id)
            continue
        if pixels.shape[:2] != (record.height, record.width):
            missing.append(record.id)
            continue
        records.append(dataclasses.replace(record, image_path=image_name))
    if missing:
        raise TranslationError("translated images missing or wrong size", ids=sorted(missing))

    return LabeledDataset.from_records(
        name or f"{day_ds.name}_fake_night",
        records,
        sort=False,
        geometry=day_ds.geometry,
        provenance={
            "translator": spec.to_payload(),
            "source_dataset": day_ds.name,
        },
    )


@dataclass(frozen=True)
class CycleAudit:
    mean_error: float
    per_image: tuple[tuple[str, float], ...]
    threshold: float
    sampled: int

    @property
    def passed(self) -> bool:
        return self.mean_error <= self.threshold

    def to_payload(self) -> dict:
        return {
            "mean_error": self.mean_error,
            "per_image": [[i, e] for i, e in self.per_image],
            "threshold": self.threshold,
            "sampled": self.sampled,
            "passed": self.passed,
        }


def audit_builtin_roundtrip(
    ds: LabeledDataset,
    images_dir: Path | str,
    params: PhotometricParams | None = None,
    *,
    sample_size: int = 16,
    threshold: float = DEFAULT_CYCLE_THRESHOLD,
    seed: int = 0,
) -> CycleAudit:
    """Forward-then-inverse cycle error on a seeded held-out sample.

    A mechanizable stand-in for eyeballing translation quality: the audit
    reports the mean reconstruction error against a configurable acceptance
    threshold; it never blocks the pipeline by itself.
    """
    params = params or PhotometricParams()
    images_dir = Path(images_dir)
    rng = random.Random(seed)
    records = sorted(ds.records, key=lambda r: r.id)
    sample = records if len(records) <= sample_size else rng.sample(records, sample_size)
    per_image = []
    for record in sorted(sample, key=lambda r: r.id):
        original = load_image(images_dir / record.image_path)
        forward = builtin_day_to_night(original, params)
        back = builtin_night_to_day(forward, params)
        per_image.append((record.id, cycle_consistency_error(original, back)))
    mean_error = float(np.mean([e for _, e in per_image])) if per_image else 0.0
    return CycleAudit(
        mean_error=mean_error,
        per_image=tuple(per_image),
        threshold=threshold,
        sampled=len(per_image),
    )
