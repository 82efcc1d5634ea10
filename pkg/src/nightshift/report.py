"""Static experiment reports: horizontal bar charts (SVG) plus JSON and CSV
exports. SVG output is plain text built with fixed float formatting, so equal
inputs produce byte-identical files."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ValidationError

_WIDTH = 820
_MARGIN_LEFT = 190
_MARGIN_RIGHT = 170
_MARGIN_TOP = 56
_MARGIN_BOTTOM = 44
_BAR_HEIGHT = 26
_BAR_GAP = 18

_BAR_FILL = "#4878a8"
_WHISKER_STROKE = "#1f3044"
_GRID_STROKE = "#d0d4da"
_TEXT_FILL = "#222222"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _x_scale(value: float, plot_width: float) -> float:
    return _MARGIN_LEFT + max(0.0, min(1.0, value)) * plot_width


def bar_chart_svg(title: str, rows: list[dict]) -> str:
    """Horizontal bar chart: one bar per row with mean-length bar, +/- std
    whisker, and a "mean +/- std" annotation. Axis range is [0, 1]."""
    plot_width = _WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_height = len(rows) * (_BAR_HEIGHT + _BAR_GAP)
    height = _MARGIN_TOP + plot_height + _MARGIN_BOTTOM

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}" font-family="Helvetica, Arial, sans-serif">'
    )
    parts.append(f'<rect x="0" y="0" width="{_WIDTH}" height="{height}" fill="#ffffff"/>')
    parts.append(
        f'<text x="{_MARGIN_LEFT}" y="24" font-size="16" fill="{_TEXT_FILL}">'
        f'{escape(title)}</text>'
    )

    # Grid and axis ticks at 0.0 .. 1.0 step 0.2.
    axis_y = _MARGIN_TOP + plot_height
    for tick in range(6):
        value = tick / 5.0
        x = _fmt(_x_scale(value, plot_width))
        parts.append(
            f'<line x1="{x}" y1="{_MARGIN_TOP}" x2="{x}" y2="{axis_y}" '
            f'stroke="{_GRID_STROKE}" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x}" y="{axis_y + 18}" font-size="11" fill="{_TEXT_FILL}" '
            f'text-anchor="middle">{value:.1f}</text>'
        )
    parts.append(
        f'<text x="{_fmt(_MARGIN_LEFT + plot_width / 2)}" y="{axis_y + 36}" '
        f'font-size="12" fill="{_TEXT_FILL}" text-anchor="middle">mAP</text>'
    )

    for i, row in enumerate(rows):
        y = _MARGIN_TOP + i * (_BAR_HEIGHT + _BAR_GAP) + _BAR_GAP / 2
        mid = y + _BAR_HEIGHT / 2
        parts.append(
            f'<text x="{_MARGIN_LEFT - 10}" y="{_fmt(mid + 4)}" font-size="12" '
            f'fill="{_TEXT_FILL}" text-anchor="end">{escape(row["label"])}</text>'
        )
        mean = row.get("mean")
        std = row.get("std")
        if mean is None:
            parts.append(
                f'<text x="{_MARGIN_LEFT + 6}" y="{_fmt(mid + 4)}" font-size="12" '
                f'fill="{_TEXT_FILL}">insufficient completed seeds</text>'
            )
            continue
        bar_w = _x_scale(mean, plot_width) - _MARGIN_LEFT
        parts.append(
            f'<rect x="{_MARGIN_LEFT}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
            f'height="{_BAR_HEIGHT}" fill="{_BAR_FILL}"/>'
        )
        if std is not None:
            lo = _fmt(_x_scale(mean - std, plot_width))
            hi = _fmt(_x_scale(mean + std, plot_width))
            parts.append(
                f'<line x1="{lo}" y1="{_fmt(mid)}" x2="{hi}" y2="{_fmt(mid)}" '
                f'stroke="{_WHISKER_STROKE}" stroke-width="1.5"/>'
            )
            for x in (lo, hi):
                parts.append(
                    f'<line x1="{x}" y1="{_fmt(mid - 5)}" x2="{x}" y2="{_fmt(mid + 5)}" '
                    f'stroke="{_WHISKER_STROKE}" stroke-width="1.5"/>'
                )
        annotation = f"{mean:.3f} ± {std:.3f}" if std is not None else f"{mean:.3f}"
        parts.append(
            f'<text x="{_MARGIN_LEFT + plot_width + 12}" y="{_fmt(mid + 4)}" '
            f'font-size="12" fill="{_TEXT_FILL}">{escape(annotation)}</text>'
        )

    parts.append(
        f'<line x1="{_MARGIN_LEFT}" y1="{axis_y}" x2="{_MARGIN_LEFT + plot_width}" '
        f'y2="{axis_y}" stroke="{_TEXT_FILL}" stroke-width="1"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_+" else "_" for c in label)


def render_report(summary: dict, out_dir: Path | str) -> list[Path]:
    """Render one bar chart per test composition plus JSON and CSV exports.

    `summary` is the payload produced by `experiments.summarize_results`
    (also persisted as summary.json by `run_all`).
    """
    experiments = summary.get("experiments", [])
    if not experiments:
        raise ValidationError("report needs at least one experiment result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    groups: dict[str, list[dict]] = {}
    for entry in experiments:
        groups.setdefault("+".join(entry["test"]), []).append(entry)

    written: list[Path] = []
    charts = []
    for test_label, entries in groups.items():
        rows = [
            {"label": "+".join(e["train"]), "mean": e["mean_map"], "std": e["std_map"]}
            for e in entries
        ]
        svg = bar_chart_svg(f"mAP on {test_label}", rows)
        svg_path = out_dir / f"report_{_safe_name(test_label)}.svg"
        svg_path.write_text(svg)
        written.append(svg_path)
        charts.append({
            "test": test_label,
            "svg": svg_path.name,
            "experiments": [e["name"] for e in entries],
        })

    json_path = out_dir / "report.json"
    json_path.write_text(
        json.dumps({"charts": charts, "summary": summary}, indent=2, sort_keys=True) + "\n"
    )
    written.append(json_path)

    runs_path = out_dir / "runs.csv"
    with open(runs_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment", "test", "seed", "mean_ap"])
        for entry in experiments:
            for seed, value in zip(entry["completed_seeds"], entry["maps"]):
                writer.writerow([entry["name"], "+".join(entry["test"]), seed, f"{value:.6f}"])
    written.append(runs_path)

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment", "test", "completed", "failed", "mean_map", "std_map"])
        for entry in experiments:
            mean = "" if entry["mean_map"] is None else f"{entry['mean_map']:.6f}"
            std = "" if entry["std_map"] is None else f"{entry['std_map']:.6f}"
            writer.writerow([
                entry["name"], "+".join(entry["test"]),
                len(entry["completed_seeds"]), len(entry["failed_seeds"]), mean, std,
            ])
    written.append(summary_path)
    return written
