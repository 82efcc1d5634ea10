import json

import pytest
from fastapi.testclient import TestClient

from nightshift.datasets import save_dataset
from nightshift.service.app import create_app

from conftest import bdd_car, bdd_entry, write_bdd_labels, write_image
from synth import build_pool


@pytest.fixture
def client():
    return TestClient(create_app())


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"


def test_prepare_happy_path(client, tmp_path):
    images = tmp_path / "images"
    write_image(images / "a.jpg", 1280, 720, color=(180, 180, 180))
    write_image(images / "b.jpg", 1280, 720, color=(180, 180, 180))
    labels = write_bdd_labels(tmp_path / "labels.json", [
        bdd_entry("a.jpg", labels=[bdd_car(300, 100, 700, 500)]),
        bdd_entry("b.jpg", weather="rainy", labels=[bdd_car(300, 100, 700, 500)]),
    ])
    resp = client.post("/datasets/prepare", json={
        "labels_path": str(labels),
        "image_root": str(images),
        "out_dir": str(tmp_path / "out"),
        "dataset_name": "day_pool",
    })
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["records"] == 1          # rainy image filtered out
    assert body["filtered_out"] == 1
    assert (tmp_path / "out" / "day_pool.json").is_file()
    assert (tmp_path / "out" / "images" / "a.png").is_file()
    prepared = json.loads((tmp_path / "out" / "day_pool.json").read_text())
    assert prepared["records"][0]["width"] == 256
    assert prepared["geometry"]["crop"]["side"] == 720


def test_split_insufficient_pool_maps_to_400(client, tmp_path):
    day = build_pool(tmp_path / "day_images", 3, seed=1)
    night = build_pool(tmp_path / "night_images", 3, night=True, seed=2)
    save_dataset(day, tmp_path / "day.json")
    save_dataset(night, tmp_path / "night.json")
    resp = client.post("/datasets/split", json={
        "day_dataset": str(tmp_path / "day.json"),
        "night_dataset": str(tmp_path / "night.json"),
        "out_dir": str(tmp_path / "splits"),
        "seed": 1,
        "subsets": {"day_train": 5, "day_test": 5, "night_train": 5, "night_test": 5},
    })
    assert resp.status_code == 400
    assert "short by" in resp.json()["detail"]


def test_split_happy_path(client, tmp_path):
    day = build_pool(tmp_path / "day_images", 8, seed=1)
    night = build_pool(tmp_path / "night_images", 8, night=True, seed=2)
    save_dataset(day, tmp_path / "day.json")
    save_dataset(night, tmp_path / "night.json")
    resp = client.post("/datasets/split", json={
        "day_dataset": str(tmp_path / "day.json"),
        "night_dataset": str(tmp_path / "night.json"),
        "out_dir": str(tmp_path / "splits"),
        "seed": 1,
        "subsets": {"day_train": 3, "day_test": 3, "night_train": 3, "night_test": 3},
    })
    assert resp.status_code == 200, resp.text
    assert resp.json()["sizes"] == {"day_train": 3, "day_test": 3,
                                    "night_train": 3, "night_test": 3}


def test_translate_builtin_with_audit(client, tmp_path):
    ds = build_pool(tmp_path / "imgs", 3, seed=4)
    save_dataset(ds, tmp_path / "day.json")
    resp = client.post("/translate", json={
        "dataset": str(tmp_path / "day.json"),
        "images_dir": str(tmp_path / "imgs"),
        "out_dir": str(tmp_path / "fake"),
        "audit_sample": 2,
    })
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["translated"] == 3
    assert body["audit"]["sampled"] == 2
    assert (tmp_path / "fake" / "manifest.json").is_file()


def test_evaluate_unknown_image_maps_to_400(client, tmp_path):
    ds = build_pool(tmp_path / "imgs", 2, seed=5)
    save_dataset(ds, tmp_path / "gt.json")
    dets = [{"image_id": "ghost", "x1": 0, "y1": 0, "x2": 10, "y2": 10, "confidence": 0.5}]
    (tmp_path / "dets.json").write_text(json.dumps(dets))
    resp = client.post("/evaluate", json={
        "detections": str(tmp_path / "dets.json"),
        "dataset": str(tmp_path / "gt.json"),
    })
    assert resp.status_code == 400
    assert "unknown image ids" in resp.json()["detail"]


def test_evaluate_perfect_detections(client, tmp_path):
    ds = build_pool(tmp_path / "imgs", 2, seed=6)
    save_dataset(ds, tmp_path / "gt.json")
    dets = [
        {"image_id": r.id, "x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2, "confidence": 1.0}
        for r in ds.records for b in r.boxes
    ]
    (tmp_path / "dets.json").write_text(json.dumps(dets))
    resp = client.post("/evaluate", json={
        "detections": str(tmp_path / "dets.json"),
        "dataset": str(tmp_path / "gt.json"),
        "out_csv": str(tmp_path / "report.csv"),
    })
    assert resp.status_code == 200
    assert resp.json()["mean_ap"] == 1.0
    assert (tmp_path / "report.csv").read_text().startswith("class,ap,")


def test_experiment_requires_config(client, tmp_path):
    resp = client.post("/experiments/run", json={"out_dir": str(tmp_path)})
    assert resp.status_code == 400
    assert "config" in resp.json()["detail"]


def test_request_validation_is_422(client):
    resp = client.post("/datasets/prepare", json={"labels_path": "x"})
    assert resp.status_code == 422
