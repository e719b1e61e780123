"""Report bundle: efficiency/performance tables, per-frame CSV, overlays.

Rendering is a pure function of the run directories: no timestamps or
environment details leak into the outputs, so re-rendering the same
runs changes no bytes. Percents are rendered to one decimal; machine
output (summaries.json, the CSV) keeps full precision.

Efficiency rows aggregate over all attempted frames; performance rows
aggregate over the cross-model common-frame filter only. Runs with
differing decision records refuse to co-filter unless explicitly
allowed, since their outputs are not comparable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ReportError
from .metrics import (
    FilterReport,
    RunSummary,
    common_frame_filter,
    displacement_errors,
    summarize,
    valid_frame_ids,
)
from .providers import ProviderConfig, estimate_cost
from .records import Frame, FrameResult, read_frames, read_results
from .runner import load_run_config


@dataclass
class RunData:
    run_dir: Path
    run_id: str
    model_name: str
    provider: ProviderConfig
    decision_record: dict
    results: list[FrameResult]
    frames: dict[str, Frame]


def load_run_dir(run_dir) -> RunData:
    run_dir = Path(run_dir)
    config_path = run_dir / "config.json"
    results_path = run_dir / "results.jsonl"
    manifest_path = run_dir / "manifest.json"
    for p in (config_path, results_path, manifest_path):
        if not p.is_file():
            raise ReportError(f"{run_dir} is not a run directory (missing {p.name})")
    snapshot = json.loads(config_path.read_text(encoding="utf-8"))
    config = load_run_config(snapshot["config"])
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    frames = read_frames(config.scenario_path)
    return RunData(
        run_dir=run_dir,
        run_id=manifest["run_id"],
        model_name=config.provider.model_name,
        provider=config.provider,
        decision_record=snapshot.get("decision_record", {}),
        results=sorted(read_results(results_path), key=lambda r: r.frame_id),
        frames={f.frame_id: f for f in frames},
    )


@dataclass
class ReportBundle:
    report_path: str
    csv_path: str
    summaries_path: str
    overlay_dir: str
    filter_report: FilterReport
    summaries: list[RunSummary]


def _fmt(value, digits: int) -> str:
    return f"{value:.{digits}f}"


def render_efficiency_table(summaries) -> str:
    header = (
        "| Model | Infer Time (s) | Infer Cost (c) | Input Tokens | Output Tokens |"
    )
    rule = "|---|---|---|---|---|"
    rows = [header, rule]
    for s in summaries:
        rows.append(
            f"| {s.model_name} | {_fmt(s.mean_latency_s, 1)} "
            f"| {_fmt(s.mean_cost_cents, 2)} | {s.mean_input_tokens:.0f} "
            f"| {s.mean_output_tokens:.0f} |"
        )
    return "\n".join(rows)


def render_performance_table(summaries) -> str:
    header = (
        "| Model | FE (%) | FE Corr (%) | ADE 1s (m) | ADE 2s (m) "
        "| ADE 3s (m) | ADE avg (m) | FDE (m) |"
    )
    rule = "|---|---|---|---|---|---|---|---|"
    rows = [header, rule]
    for s in summaries:
        d = s.displacement
        if d is None:
            cells = ["-"] * 5
        else:
            cells = [
                _fmt(d.ade_1s, 2),
                _fmt(d.ade_2s, 2),
                _fmt(d.ade_3s, 2),
                _fmt(d.ade_avg, 2),
                _fmt(d.fde, 2),
            ]
        rows.append(
            f"| {s.model_name} | {_fmt(s.fe_rate, 1)} | {_fmt(s.fe_corr_rate, 1)} "
            f"| {cells[0]} | {cells[1]} | {cells[2]} | {cells[3]} | {cells[4]} |"
        )
    return "\n".join(rows)


def trajectory_overlay_svg(predicted, ground_truth, frame_id: str) -> str:
    """Ego-frame overlay: forward (+x) up, left (+y) to the left.

    Grid lines every 5 m with the scale labelled, ground truth in green,
    prediction in red.
    """
    width, height = 360, 480
    cx, cy = width / 2.0, height - 60.0
    pts = list(ground_truth) + list(predicted) + [(0.0, 0.0)]
    extent = max(max(abs(x) for x, _ in pts), max(abs(y) for _, y in pts), 5.0)
    scale = min((height - 100) / (extent * 1.15), (width - 60) / (2 * extent * 1.15))

    def to_px(p):
        x, y = p
        return (cx - y * scale, cy - x * scale)

    def polyline(points, colour):
        coords = " ".join(f"{px:.1f},{py:.1f}" for px, py in map(to_px, points))
        return (
            f'<polyline points="{coords}" fill="none" stroke="{colour}" '
            f'stroke-width="2"/>'
        )

    grid = []
    step_px = 5.0 * scale
    n_lines = int(max(cy, height - cy) / step_px) + 1
    for i in range(1, n_lines + 1):
        y_px = cy - i * step_px
        if y_px < 10:
            break
        grid.append(
            f'<line x1="20" y1="{y_px:.1f}" x2="{width - 20}" y2="{y_px:.1f}" '
            f'stroke="#ddd" stroke-width="1"/>'
        )
        grid.append(
            f'<text x="{width - 18}" y="{y_px + 4:.1f}" font-size="10" '
            f'fill="#888">{i * 5} m</text>'
        )
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        *grid,
        f'<line x1="20" y1="{cy:.1f}" x2="{width - 20}" y2="{cy:.1f}" '
        f'stroke="#bbb" stroke-width="1"/>',
        f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="4" fill="#333"/>',
        polyline([(0.0, 0.0)] + list(ground_truth), "#2a8f4a"),
        polyline([(0.0, 0.0)] + list(predicted), "#d03431"),
        f'<text x="12" y="18" font-size="12" fill="#333">{frame_id}</text>',
        '<text x="12" y="34" font-size="11" fill="#2a8f4a">ground truth</text>',
        '<text x="12" y="48" font-size="11" fill="#d03431">predicted</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


CSV_COLUMNS = [
    "model",
    "frame_id",
    "parse_status",
    "error_class",
    "retained",
    "input_tokens",
    "output_tokens",
    "latency_s",
    "cost_cents",
    "ade_1s",
    "ade_2s",
    "ade_3s",
    "ade_avg",
    "fde",
]


def generate_report(run_dirs, out_dir, allow_mixed_decisions: bool = False) -> ReportBundle:
    runs = [load_run_dir(d) for d in run_dirs]
    if not runs:
        raise ReportError("no run directories given")
    seen_ids = set()
    for run in runs:
        if run.run_id in seen_ids:
            raise ReportError(f"duplicate run_id {run.run_id!r}")
        seen_ids.add(run.run_id)

    baseline = runs[0].decision_record
    for run in runs[1:]:
        if run.decision_record != baseline and not allow_mixed_decisions:
            raise ReportError(
                f"run {run.run_id!r} was produced under different decision "
                "settings; pass allow_mixed_decisions to co-filter anyway"
            )

    attempted = [
        {r.frame_id for r in run.results} for run in runs
    ]
    universe = set.intersection(*attempted)
    if not universe:
        raise ReportError(
            "runs share no frames: the common-frame filter would retain "
            "nothing, so these runs cannot be compared"
        )

    valid = {
        run.run_id: valid_frame_ids(run.results) & universe for run in runs
    }
    filter_report = common_frame_filter(valid, universe)

    summaries = [
        summarize(run.model_name, run.results, run.frames, run.provider, filter_report)
        for run in runs
    ]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    overlay_dir = out_dir / "overlays"

    csv_path = out_dir / "per_frame.csv"
    retained = set(filter_report.retained_frame_ids)
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for run in runs:
            for r in run.results:
                in_tokens = sum(i for i, _ in r.usage)
                out_tokens = sum(o for _, o in r.usage)
                row = [
                    run.model_name,
                    r.frame_id,
                    r.parse_status,
                    r.error_class or "",
                    "yes" if r.frame_id in retained else "no",
                    in_tokens,
                    out_tokens,
                    repr(r.latency_total),
                    repr(estimate_cost(in_tokens, out_tokens, run.provider)),
                ]
                if r.predicted is not None and r.frame_id in run.frames:
                    m = displacement_errors(
                        r.predicted, run.frames[r.frame_id].ground_truth
                    )
                    row += [repr(v) for v in (m.ade_1s, m.ade_2s, m.ade_3s, m.ade_avg, m.fde)]
                else:
                    row += ["", "", "", "", ""]
                writer.writerow(row)

    for run in runs:
        run_overlays = overlay_dir / run.run_id
        run_overlays.mkdir(parents=True, exist_ok=True)
        for r in run.results:
            if r.predicted is None or r.frame_id not in run.frames:
                continue
            svg = trajectory_overlay_svg(
                r.predicted.points,
                run.frames[r.frame_id].ground_truth.points,
                r.frame_id,
            )
            (run_overlays / f"{r.frame_id}.svg").write_text(svg, encoding="utf-8")

    def _summary_doc(run, s):
        return {
            "run_id": run.run_id,
            "model_name": s.model_name,
            "frames_total": s.frames_total,
            "fe_rate": s.fe_rate,
            "fe_corr_rate": s.fe_corr_rate,
            "mean_latency_s": s.mean_latency_s,
            "mean_input_tokens": s.mean_input_tokens,
            "mean_output_tokens": s.mean_output_tokens,
            "mean_cost_cents": s.mean_cost_cents,
            "frames_scored": s.frames_scored,
            "displacement": None
            if s.displacement is None
            else {
                "ade_1s": s.displacement.ade_1s,
                "ade_2s": s.displacement.ade_2s,
                "ade_3s": s.displacement.ade_3s,
                "ade_avg": s.displacement.ade_avg,
                "fde": s.displacement.fde,
            },
        }

    # one machine-readable summary document per run, plus a combined index
    per_run_dir = out_dir / "summaries"
    per_run_dir.mkdir(parents=True, exist_ok=True)
    for run, s in zip(runs, summaries):
        (per_run_dir / f"{run.run_id}.json").write_text(
            json.dumps(_summary_doc(run, s), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    summaries_path = out_dir / "summaries.json"
    machine = {
        "filter": {
            "retained": len(filter_report.retained_frame_ids),
            "universe": len(universe),
            "retention_rate": filter_report.retention_rate,
            "excluded": {k: list(v) for k, v in filter_report.excluded.items()},
        },
        "runs": [_summary_doc(run, s) for run, s in zip(runs, summaries)],
    }
    summaries_path.write_text(
        json.dumps(machine, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    report_path = out_dir / "report.md"
    lines = [
        "# Benchmark report",
        "",
        "Runs: " + ", ".join(f"{run.run_id} ({run.model_name})" for run in runs),
        "",
        "Efficiency rows cover every attempted frame; performance rows cover",
        "only frames retained by the cross-model filter below.",
        "",
        "## Efficiency",
        "",
        render_efficiency_table(summaries),
        "",
        "## Performance (filtered frames)",
        "",
        render_performance_table(summaries),
        "",
        "## Common-frame filter",
        "",
        f"Retained {len(filter_report.retained_frame_ids)} of {len(universe)} "
        f"frames ({filter_report.retention_rate:.1f}%).",
    ]
    if filter_report.excluded:
        lines.append("")
        lines.append("Excluded frames and the models that failed them:")
        lines.append("")
        for frame_id, models in filter_report.excluded.items():
            lines.append(f"- {frame_id}: {', '.join(models)}")
    if allow_mixed_decisions:
        lines.append("")
        lines.append(
            "Warning: runs were co-filtered despite differing decision records."
        )
    lines.append("")
    report_path.write_text("\n".join(lines), encoding="utf-8")

    return ReportBundle(
        report_path=str(report_path),
        csv_path=str(csv_path),
        summaries_path=str(summaries_path),
        overlay_dir=str(overlay_dir),
        filter_report=filter_report,
        summaries=summaries,
    )
