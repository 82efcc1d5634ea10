"""Command-line client for the pipeline service.

Subcommands mirror the service endpoints one to one. By default each request
runs against an in-process instance of the service (no daemon needed);
`--server http://host:port` targets a running instance instead, and `serve`
starts one.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

PREPARE_PATH = "/datasets/prepare"
SPLIT_PATH = "/datasets/split"
TRANSLATE_PATH = "/translate"
ASSEMBLE_PATH = "/datasets/assemble"
COMPOSE_PATH = "/datasets/compose"
EVALUATE_PATH = "/evaluate"
EXPERIMENT_PATH = "/experiments/run"
REPORT_PATH = "/reports/render"


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    async def _in_process() -> httpx.Response:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://nightshift.internal", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(_in_process())


def _finish(response: httpx.Response) -> int:
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        return 1
    print(json.dumps(response.json(), indent=2, sort_keys=True))
    return 0


def _load_config(args: argparse.Namespace) -> dict:
    if not args.config:
        return {}
    return json.loads(Path(args.config).read_text())


def _require_out(args: argparse.Namespace) -> str:
    if not args.out:
        raise SystemExit("error: --out <dir> is required for this command")
    return str(args.out)


def _translator_payload(args: argparse.Namespace, config: dict) -> dict:
    if getattr(args, "translator", None):
        return json.loads(args.translator)
    if "translator" in config:
        return config["translator"]
    return {"kind": "builtin_photometric", "parameters": {}}


def _csv_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def cmd_prepare(args: argparse.Namespace) -> int:
    payload = {
        "labels_path": str(args.labels),
        "image_root": str(args.images),
        "out_dir": _require_out(args),
        "dataset_name": args.name,
        "time_of_day": _csv_list(args.time_of_day),
        "min_cars": args.min_cars,
        "crop_side": args.crop_side,
        "horizontal_anchor": args.anchor,
        "target_side": args.target_side,
        "prune_min_side": args.prune_min_side,
        "prune_min_side_occluded": args.prune_min_side_occluded,
        "flag_suspects": args.flag_suspects,
        "jobs": args.jobs,
    }
    if args.weather is not None:
        payload["weather"] = _csv_list(args.weather)
    if args.scene is not None:
        payload["scene"] = _csv_list(args.scene)
    return _finish(_post(args.server, PREPARE_PATH, payload))


def cmd_split(args: argparse.Namespace) -> int:
    config = _load_config(args).get("split", {})
    day_dataset = args.day_dataset or config.get("day_dataset")
    night_dataset = args.night_dataset or config.get("night_dataset")
    if not day_dataset or not night_dataset:
        raise SystemExit("error: split needs --day-dataset and --night-dataset "
                         "(or a 'split' stanza in --config)")
    subsets = dict(config.get("subsets", {}))
    for key in ("day_train", "day_test", "night_train", "night_test"):
        flag = getattr(args, key)
        if flag is not None:
            subsets[key] = flag
        subsets.setdefault(key, 3000)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    payload = {
        "day_dataset": str(day_dataset),
        "night_dataset": str(night_dataset),
        "out_dir": _require_out(args),
        "seed": seed,
        "subsets": subsets,
    }
    return _finish(_post(args.server, SPLIT_PATH, payload))


def cmd_translate(args: argparse.Namespace) -> int:
    payload = {
        "dataset": str(args.dataset),
        "images_dir": str(args.images),
        "out_dir": _require_out(args),
        "translator": _translator_payload(args, _load_config(args)),
        "jobs": args.jobs,
        "audit": not args.no_audit,
        "audit_sample": args.audit_sample,
        "audit_threshold": args.audit_threshold,
    }
    return _finish(_post(args.server, TRANSLATE_PATH, payload))


def cmd_assemble(args: argparse.Namespace) -> int:
    payload = {
        "day_dataset": str(args.day_dataset),
        "translated_dir": str(args.translated),
        "out_dataset": str(args.out_dataset),
        "translator": _translator_payload(args, _load_config(args)),
        "name": args.name,
    }
    return _finish(_post(args.server, ASSEMBLE_PATH, payload))


def cmd_compose(args: argparse.Namespace) -> int:
    parts = []
    for spec in args.part:
        try:
            name, rest = spec.split("=", 1)
            dataset, images = rest.rsplit(":", 1)
        except ValueError:
            raise SystemExit(f"error: bad --part {spec!r}, expected name=dataset.json:images_dir")
        parts.append({"name": name, "dataset": dataset, "images": images})
    payload = {
        "parts": parts,
        "out_dataset": str(args.out_dataset),
        "out_images": str(args.out_images),
    }
    return _finish(_post(args.server, COMPOSE_PATH, payload))


def cmd_evaluate(args: argparse.Namespace) -> int:
    payload = {
        "detections": str(args.detections),
        "dataset": str(args.dataset),
        "iou_threshold": args.iou_threshold,
        "out_json": str(args.out_json) if args.out_json else None,
        "out_csv": str(args.out_csv) if args.out_csv else None,
    }
    return _finish(_post(args.server, EVALUATE_PATH, payload))


def cmd_experiment(args: argparse.Namespace) -> int:
    if not args.config:
        raise SystemExit("error: experiment needs --config <file>")
    payload = {
        "config_path": str(args.config),
        "out_dir": _require_out(args),
        "jobs": args.jobs,
    }
    return _finish(_post(args.server, EXPERIMENT_PATH, payload))


def cmd_report(args: argparse.Namespace) -> int:
    payload = {
        "summary_path": str(args.summary),
        "out_dir": _require_out(args),
    }
    return _finish(_post(args.server, REPORT_PATH, payload))


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nightshift",
        description="Day-to-night car-detection pipeline toolkit.",
    )
    parser.add_argument("--server", help="service base URL (default: run in-process)")
    parser.add_argument("--config", type=Path, help="pipeline/experiment config JSON")
    parser.add_argument("--seed", type=int, help="seed for seeded stages (split)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")
    parser.add_argument("--out", type=Path, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse, filter, and geometrically prepare labels")
    p.add_argument("--labels", required=True, type=Path)
    p.add_argument("--images", required=True, type=Path)
    p.add_argument("--name")
    p.add_argument("--time-of-day", default="daytime",
                   help="comma-separated: daytime,night,dawn_dusk,undefined")
    p.add_argument("--weather", help="comma-separated weather values (default: clear,partly_cloudy)")
    p.add_argument("--scene", help="comma-separated scene values (default: highway,city_street,residential)")
    p.add_argument("--min-cars", type=int, default=1)
    p.add_argument("--crop-side", type=int, default=720)
    p.add_argument("--anchor", type=float, default=0.5)
    p.add_argument("--target-side", type=int, default=256)
    p.add_argument("--prune-min-side", type=float, default=20.0)
    p.add_argument("--prune-min-side-occluded", type=float, default=30.0)
    p.add_argument("--flag-suspects", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("split", help="sample the four train/test subsets from pools")
    p.add_argument("--day-dataset", type=Path)
    p.add_argument("--night-dataset", type=Path)
    p.add_argument("--day-train", type=int)
    p.add_argument("--day-test", type=int)
    p.add_argument("--night-train", type=int)
    p.add_argument("--night-test", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("translate", help="translate a dataset's images")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--images", required=True, type=Path)
    p.add_argument("--translator", help="inline translator spec JSON")
    p.add_argument("--no-audit", action="store_true")
    p.add_argument("--audit-sample", type=int, default=16)
    p.add_argument("--audit-threshold", type=float, default=25.0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("assemble", help="pair translated images with source annotations")
    p.add_argument("--day-dataset", required=True, type=Path)
    p.add_argument("--translated", required=True, type=Path)
    p.add_argument("--out-dataset", required=True, type=Path)
    p.add_argument("--translator", help="inline translator spec JSON (provenance)")
    p.add_argument("--name")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("compose", help="concatenate datasets with source-tag prefixes")
    p.add_argument("--part", action="append", required=True,
                   help="name=dataset.json:images_dir (repeatable, ordered)")
    p.add_argument("--out-dataset", required=True, type=Path)
    p.add_argument("--out-images", required=True, type=Path)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("evaluate", help="score a detections file against ground truth")
    p.add_argument("--detections", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out-json", type=Path)
    p.add_argument("--out-csv", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run all configured experiments")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="render charts and exports from a summary")
    p.add_argument("--summary", required=True, type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
