"""nuScenes-style metadata tables -> self-contained scenario JSONL.

Only the 2 Hz annotated keyframes are used (they carry the synchronized
front-camera image and ego pose); intermediate sweeps are ignored. A
keyframe becomes a frame only when it has six full keyframes of past
and six of future inside the same scene, so a scene of n keyframes
yields max(0, n - 12) frames. The pose z coordinate is dropped;
evaluation is planar.

Images are referenced by their dataset-relative path, never copied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestError
from .kinematics import EgoPose, global_to_ego, history_from_poses, yaw_from_quaternion
from .records import Frame, Trajectory, encode_frame

REQUIRED_TABLES = ("scene", "sample", "sample_data", "ego_pose", "calibrated_sensor")
FRONT_CAMERA_CHANNEL = "CAM_FRONT"
KEYFRAME_TICK_S = 0.5
PAST_KEYFRAMES = 6
FUTURE_KEYFRAMES = 6


@dataclass
class TableSet:
    scenes: dict[str, dict]
    samples: dict[str, dict]
    sample_data: dict[str, dict]
    ego_poses: dict[str, dict]
    calibrated_sensors: dict[str, dict]
    sensors: dict[str, dict]
    front_camera_by_sample: dict[str, dict]

    def scene_by_id(self, scene_id: str) -> dict:
        """Look up a scene by token, falling back to its name."""
        if scene_id in self.scenes:
            return self.scenes[scene_id]
        for record in self.scenes.values():
            if record.get("name") == scene_id:
                return record
        raise IngestError(f"unknown scene {scene_id!r}")


def _table_dir(dataroot: Path) -> Path:
    if (dataroot / "scene.json").is_file():
        return dataroot
    candidates = sorted(dataroot.glob("v1.0-*"))
    for candidate in candidates:
        if (candidate / "scene.json").is_file():
            return candidate
    raise IngestError(f"no scene.json under {dataroot}")


def _load_table(table_dir: Path, name: str) -> dict[str, dict]:
    path = table_dir / f"{name}.json"
    if not path.is_file():
        raise IngestError(f"missing table file {path}")
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise IngestError(f"{path} is not a JSON array")
    return {row["token"]: row for row in rows}


def load_tables(dataroot) -> TableSet:
    table_dir = _table_dir(Path(dataroot))
    scenes = _load_table(table_dir, "scene")
    samples = _load_table(table_dir, "sample")
    sample_data = _load_table(table_dir, "sample_data")
    ego_poses = _load_table(table_dir, "ego_pose")
    calibrated_sensors = _load_table(table_dir, "calibrated_sensor")
    sensors = {}
    if (table_dir / "sensor.json").is_file():
        sensors = _load_table(table_dir, "sensor")

    for token, sample in samples.items():
        if sample["scene_token"] not in scenes:
            raise IngestError(
                f"sample {token} references unknown scene token "
                f"{sample['scene_token']}"
            )

    front_channel_cs = None
    if sensors:
        front_tokens = {
            t for t, s in sensors.items() if s.get("channel") == FRONT_CAMERA_CHANNEL
        }
        front_channel_cs = {
            t
            for t, cs in calibrated_sensors.items()
            if cs.get("sensor_token") in front_tokens
        }

    front_camera_by_sample: dict[str, dict] = {}
    for token, sd in sample_data.items():
        if not sd.get("is_key_frame"):
            continue
        if front_channel_cs is not None:
            is_front = sd.get("calibrated_sensor_token") in front_channel_cs
        else:
            is_front = FRONT_CAMERA_CHANNEL in sd.get("filename", "")
        if not is_front:
            continue
        if sd["sample_token"] not in samples:
            raise IngestError(
                f"sample_data {token} references unknown sample token "
                f"{sd['sample_token']}"
            )
        if sd["ego_pose_token"] not in ego_poses:
            raise IngestError(
                f"sample_data {token} references unknown ego_pose token "
                f"{sd['ego_pose_token']}"
            )
        front_camera_by_sample[sd["sample_token"]] = sd

    return TableSet(
        scenes=scenes,
        samples=samples,
        sample_data=sample_data,
        ego_poses=ego_poses,
        calibrated_sensors=calibrated_sensors,
        sensors=sensors,
        front_camera_by_sample=front_camera_by_sample,
    )


def scene_keyframes(tables: TableSet, scene: dict) -> list[dict]:
    """Samples of a scene in chain order (first_sample_token -> next)."""
    ordered = []
    token = scene["first_sample_token"]
    while token:
        sample = tables.samples.get(token)
        if sample is None:
            raise IngestError(f"sample chain hits unknown token {token}")
        ordered.append(sample)
        token = sample.get("next", "")
    return ordered


def _pose_for_sample(tables: TableSet, sample: dict) -> tuple[EgoPose, dict]:
    sd = tables.front_camera_by_sample.get(sample["token"])
    if sd is None:
        raise IngestError(
            f"no front-camera keyframe for sample {sample['token']}"
        )
    raw = tables.ego_poses.get(sd["ego_pose_token"])
    if raw is None:
        raise IngestError(f"missing ego pose for sample {sample['token']}")
    tx, ty = raw["translation"][0], raw["translation"][1]
    pose = EgoPose(
        x=tx,
        y=ty,
        yaw=yaw_from_quaternion(raw["rotation"]),
        timestamp_us=raw["timestamp"],
    )
    return pose, sd


def build_frames(tables: TableSet, scene_id: str) -> list[Frame]:
    scene = tables.scene_by_id(scene_id)
    keyframes = scene_keyframes(tables, scene)
    n = len(keyframes)
    if n < PAST_KEYFRAMES + FUTURE_KEYFRAMES + 1:
        return []
    poses = []
    image_paths = []
    for sample in keyframes:
        pose, sd = _pose_for_sample(tables, sample)
        poses.append(pose)
        image_paths.append(sd["filename"])

    frames = []
    for t in range(PAST_KEYFRAMES, n - FUTURE_KEYFRAMES):
        history = history_from_poses(
            poses[t - PAST_KEYFRAMES : t + 1], dt=KEYFRAME_TICK_S
        )
        future = [
            (p.x, p.y) for p in poses[t + 1 : t + 1 + FUTURE_KEYFRAMES]
        ]
        ground_truth = Trajectory(
            points=tuple(global_to_ego(poses[t], future)), tick=KEYFRAME_TICK_S
        )
        frames.append(
            Frame(
                frame_id=keyframes[t]["token"],
                scene_id=scene["token"],
                timestamp_us=keyframes[t]["timestamp"],
                image_path=image_paths[t],
                history=history,
                ground_truth=ground_truth,
            )
        )
    return frames


def write_scenarios(frames, out) -> int:
    """Write frames as scenario JSONL, ordered by (scene_id, timestamp)."""
    ordered = sorted(frames, key=lambda f: (f.scene_id, f.timestamp_us))
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for frame in ordered:
            f.write(encode_frame(frame) + "\n")
    return len(ordered)
