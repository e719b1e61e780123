"""Core record types and their JSONL encoding.

All records are immutable values and safe to share between workers.
On disk, one record is one UTF-8 JSON object per line with keys in a
fixed order, so encoding the same record twice is byte-identical:

  Frame:       frame_id, scene_id, timestamp_us, image_path,
               history (6 x [speed, curvature]), ground_truth (6 x [x, y])
  FrameResult: frame_id, parse_status, error_class?, stage_texts,
               actions?, predicted?, usage, latency_stages, latency_total

Optional keys (?) are omitted entirely when absent. Floats are written
with Python's shortest round-trip repr, so decode(encode(r)) == r exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DecodeError

TICK_SECONDS = 0.5
HISTORY_LEN = 6
HORIZON_STEPS = 6
CURVATURE_BOUND = 1.0

PARSE_STATUSES = ("strict", "corrected", "failed")

# One-millisecond slack for the per-stage latency accumulation check.
LATENCY_SUM_TOL = 1e-3


@dataclass(frozen=True)
class ActionState:
    """One (speed, curvature) control sample at a 0.5 s tick.

    Speed is longitudinal, m/s, non-negative. Curvature is 1/m, signed;
    positive bends left under the heading update theta += k*v*dt.
    """

    speed: float
    curvature: float


@dataclass(frozen=True)
class Trajectory:
    """Ordered ego-frame positions, one per tick, origin excluded."""

    points: tuple[tuple[float, float], ...]
    tick: float = TICK_SECONDS


@dataclass(frozen=True)
class Frame:
    """One evaluation instance: image, 6-action history, 6-point future."""

    frame_id: str
    scene_id: str
    timestamp_us: int
    image_path: str
    history: tuple[ActionState, ...]
    ground_truth: Trajectory


@dataclass(frozen=True)
class FrameResult:
    """Full per-frame record of one pipeline pass.

    usage holds one (input_tokens, output_tokens) pair per stage;
    latency_stages holds one wall-clock duration per stage, seconds.
    actions/predicted are present iff parse_status is strict or corrected;
    error_class is present iff parse_status is not strict.
    """

    frame_id: str
    stage_texts: tuple[str, str, str]
    parse_status: str
    usage: tuple[tuple[int, int], ...]
    latency_stages: tuple[float, float, float]
    latency_total: float
    actions: tuple[ActionState, ...] | None = None
    predicted: Trajectory | None = None
    error_class: str | None = None


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_action(a: ActionState) -> list[str]:
    """Invariant violations for a single action, by name."""
    violations = []
    if not _finite(a.speed):
        violations.append("non-finite-speed")
    elif a.speed < 0:
        violations.append("negative-speed")
    if not _finite(a.curvature):
        violations.append("non-finite-curvature")
    elif abs(a.curvature) > CURVATURE_BOUND:
        violations.append("curvature-bound")
    return violations


def validate_frame(frame: Frame) -> list[str]:
    """Return the list of violated invariant names; empty means ok."""
    violations = []
    if len(frame.history) != HISTORY_LEN:
        violations.append("history-length")
    for a in frame.history:
        for v in validate_action(a):
            if v not in violations:
                violations.append(v)
    if len(frame.ground_truth.points) != HORIZON_STEPS:
        violations.append("ground-truth-length")
    if any(not (_finite(x) and _finite(y)) for x, y in frame.ground_truth.points):
        violations.append("non-finite-coordinate")
    if not frame.image_path:
        violations.append("empty-image-path")
    return violations


def validate_result(result: FrameResult) -> list[str]:
    violations = []
    if result.parse_status not in PARSE_STATUSES:
        violations.append("unknown-parse-status")
    has_prediction = result.parse_status in ("strict", "corrected")
    if has_prediction:
        if result.actions is None or len(result.actions) != HORIZON_STEPS:
            violations.append("missing-actions")
        if result.predicted is None or len(result.predicted.points) != HORIZON_STEPS:
            violations.append("missing-prediction")
    else:
        if result.actions is not None:
            violations.append("unexpected-actions")
        if result.predicted is not None:
            violations.append("unexpected-prediction")
    if result.parse_status != "strict" and result.error_class is None:
        violations.append("missing-error-class")
    if len(result.usage) != 3:
        violations.append("usage-stage-count")
    if len(result.stage_texts) != 3:
        violations.append("stage-text-count")
    if abs(sum(result.latency_stages) - result.latency_total) > LATENCY_SUM_TOL:
        violations.append("latency-total-mismatch")
    return violations


# ---------------------------------------------------------------------------
# Encoding


def frame_to_dict(frame: Frame) -> dict:
    return {
        "frame_id": frame.frame_id,
        "scene_id": frame.scene_id,
        "timestamp_us": frame.timestamp_us,
        "image_path": frame.image_path,
        "history": [[a.speed, a.curvature] for a in frame.history],
        "ground_truth": [[x, y] for x, y in frame.ground_truth.points],
    }


def result_to_dict(result: FrameResult) -> dict:
    d: dict = {
        "frame_id": result.frame_id,
        "parse_status": result.parse_status,
    }
    if result.error_class is not None:
        d["error_class"] = result.error_class
    d["stage_texts"] = list(result.stage_texts)
    if result.actions is not None:
        d["actions"] = [[a.speed, a.curvature] for a in result.actions]
    if result.predicted is not None:
        d["predicted"] = [[x, y] for x, y in result.predicted.points]
    d["usage"] = [[i, o] for i, o in result.usage]
    d["latency_stages"] = list(result.latency_stages)
    d["latency_total"] = result.latency_total
    return d


def encode_frame(frame: Frame) -> str:
    return json.dumps(frame_to_dict(frame), ensure_ascii=True)


def encode_result(result: FrameResult) -> str:
    return json.dumps(result_to_dict(result), ensure_ascii=True)


# ---------------------------------------------------------------------------
# Decoding, with the first offending field named


def _require(d: dict, key: str):
    if key not in d:
        raise DecodeError(key, "missing")
    return d[key]


def _as_text(d: dict, key: str) -> str:
    v = _require(d, key)
    if not isinstance(v, str):
        raise DecodeError(key, "expected a string")
    return v


def _as_int(d: dict, key: str) -> int:
    v = _require(d, key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise DecodeError(key, "expected an integer")
    return v


def _as_number(raw, key: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise DecodeError(key, "expected a number")
    return float(raw)


def _as_pairs(d: dict, key: str, count: int | None) -> list[tuple[float, float]]:
    v = _require(d, key)
    if not isinstance(v, list):
        raise DecodeError(key, "expected an array of pairs")
    if count is not None and len(v) != count:
        raise DecodeError(key, f"expected {count} pairs, got {len(v)}")
    pairs = []
    for item in v:
        if not isinstance(item, list) or len(item) != 2:
            raise DecodeError(key, "each element must be a 2-number array")
        pairs.append((_as_number(item[0], key), _as_number(item[1], key)))
    return pairs


def _parse_json_line(text: str) -> dict:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError("line", f"invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise DecodeError("line", "expected a JSON object")
    return d


def frame_from_dict(d: dict) -> Frame:
    frame_id = _as_text(d, "frame_id")
    scene_id = _as_text(d, "scene_id")
    timestamp_us = _as_int(d, "timestamp_us")
    image_path = _as_text(d, "image_path")
    history = tuple(
        ActionState(v, k) for v, k in _as_pairs(d, "history", HISTORY_LEN)
    )
    gt = tuple(_as_pairs(d, "ground_truth", HORIZON_STEPS))
    return Frame(
        frame_id=frame_id,
        scene_id=scene_id,
        timestamp_us=timestamp_us,
        image_path=image_path,
        history=history,
        ground_truth=Trajectory(points=gt),
    )


def decode_frame(text: str) -> Frame:
    return frame_from_dict(_parse_json_line(text))


def result_from_dict(d: dict) -> FrameResult:
    frame_id = _as_text(d, "frame_id")
    parse_status = _as_text(d, "parse_status")
    if parse_status not in PARSE_STATUSES:
        raise DecodeError("parse_status", f"unknown status {parse_status!r}")

    error_class = None
    if "error_class" in d:
        error_class = _as_text(d, "error_class")

    stage_texts = _require(d, "stage_texts")
    if (
        not isinstance(stage_texts, list)
        or len(stage_texts) != 3
        or not all(isinstance(t, str) for t in stage_texts)
    ):
        raise DecodeError("stage_texts", "expected 3 strings")

    actions = None
    if parse_status in ("strict", "corrected"):
        actions = tuple(
            ActionState(v, k) for v, k in _as_pairs(d, "actions", HISTORY_LEN)
        )
        predicted = Trajectory(points=tuple(_as_pairs(d, "predicted", HORIZON_STEPS)))
    else:
        if "actions" in d or "predicted" in d:
            raise DecodeError("actions", "present on a failed result")
        predicted = None

    usage_raw = _require(d, "usage")
    if not isinstance(usage_raw, list) or len(usage_raw) != 3:
        raise DecodeError("usage", "expected 3 [input, output] pairs")
    usage = []
    for item in usage_raw:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(t, int) and not isinstance(t, bool) for t in item)
        ):
            raise DecodeError("usage", "each element must be a 2-integer array")
        usage.append((item[0], item[1]))

    lat_raw = _require(d, "latency_stages")
    if not isinstance(lat_raw, list) or len(lat_raw) != 3:
        raise DecodeError("latency_stages", "expected 3 numbers")
    latency_stages = tuple(_as_number(x, "latency_stages") for x in lat_raw)
    latency_total = _as_number(_require(d, "latency_total"), "latency_total")

    return FrameResult(
        frame_id=frame_id,
        stage_texts=tuple(stage_texts),
        parse_status=parse_status,
        usage=tuple(usage),
        latency_stages=latency_stages,
        latency_total=latency_total,
        actions=actions,
        predicted=predicted,
        error_class=error_class,
    )


def decode_result(text: str) -> FrameResult:
    return result_from_dict(_parse_json_line(text))


# ---------------------------------------------------------------------------
# JSONL file helpers


def write_frames(frames, path) -> int:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        n = 0
        for frame in frames:
            f.write(encode_frame(frame) + "\n")
            n += 1
    return n


def read_frames(path) -> list[Frame]:
    frames = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                frames.append(decode_frame(line))
    return frames


def read_results(path) -> list[FrameResult]:
    results = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                results.append(decode_result(line))
    return results
