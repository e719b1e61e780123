from __future__ import annotations

import json
import math
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from drivebench.kinematics import IntegratorConfig, integrate
from drivebench.pipeline import format_history
from drivebench.providers import ProviderConfig, ScriptEntry, ScriptedProvider
from drivebench.records import ActionState, Frame

# A valid 1x1 grey PNG; the pipeline only needs readable bytes.
TINY_PNG = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108000000003a7e9b55"
    "0000000a49444154789c636800000082008177cd72b60000000049454e44ae426082"
)


def make_actions(seed: int) -> tuple[ActionState, ...]:
    """Six deterministic actions, exactly representable at the prompt's
    2/4-decimal formatting so format -> parse -> integrate is lossless."""
    rng = random.Random(seed)
    return tuple(
        ActionState(
            speed=round(rng.uniform(0.5, 15.0), 2),
            curvature=round(rng.uniform(-0.05, 0.05), 4),
        )
        for _ in range(6)
    )


def make_frame(i: int, scene_id: str = "scene-a", actions=None) -> Frame:
    actions = actions if actions is not None else make_actions(1000 + i)
    return Frame(
        frame_id=f"frame-{i:04d}",
        scene_id=scene_id,
        timestamp_us=1_500_000_000_000_000 + i * 500_000,
        image_path=f"images/{i:04d}.png",
        history=tuple(ActionState(2.0, 0.0) for _ in range(6)),
        ground_truth=integrate(actions, IntegratorConfig()),
    )


def consistent_script(frames, frame_actions) -> dict:
    """Script whose stage-3 text reproduces each frame's ground truth."""
    script = {}
    for frame in frames:
        script[(frame.frame_id, 1)] = ScriptEntry(
            text=f"A quiet street for {frame.frame_id}.",
            input_tokens=900,
            output_tokens=120,
        )
        script[(frame.frame_id, 2)] = ScriptEntry(
            text="Keep lane and current speed.", input_tokens=1100, output_tokens=40
        )
        script[(frame.frame_id, 3)] = ScriptEntry(
            text=format_history(frame_actions[frame.frame_id]),
            input_tokens=1200,
            output_tokens=60,
        )
    return script


@pytest.fixture
def scenario(tmp_path):
    """10 frames + images + a ground-truth-consistent script on disk."""
    frames = []
    frame_actions = {}
    for i in range(10):
        actions = make_actions(2000 + i)
        frame = make_frame(i, actions=actions)
        frames.append(frame)
        frame_actions[frame.frame_id] = actions

    (tmp_path / "images").mkdir()
    for frame in frames:
        (tmp_path / frame.image_path).write_bytes(TINY_PNG)

    scenario_path = tmp_path / "scenario.jsonl"
    from drivebench.records import write_frames

    write_frames(frames, scenario_path)

    script = consistent_script(frames, frame_actions)
    script_path = tmp_path / "script.json"
    from drivebench.providers import dump_script

    dump_script(script, script_path)
    return {
        "dir": tmp_path,
        "frames": frames,
        "actions": frame_actions,
        "scenario_path": scenario_path,
        "script": script,
        "script_path": script_path,
    }


def scripted_provider(script, **config_kwargs) -> ScriptedProvider:
    config = ProviderConfig(kind="scripted", model_name="scripted-model", **config_kwargs)
    return ScriptedProvider(config, script=script)


def run_config_dict(scenario, tmp_path, run_id="run-a", **overrides) -> dict:
    raw = {
        "run_id": run_id,
        "scenario_path": str(scenario["scenario_path"]),
        "output_dir": str(tmp_path / "runs"),
        "image_root": str(scenario["dir"]),
        "provider": {
            "kind": "scripted",
            "model_name": "scripted-model",
            "script_path": str(scenario["script_path"]),
            "price_in": 2.50,
            "price_out": 10.00,
        },
        "max_workers": 3,
    }
    raw.update(overrides)
    return raw


# ---------------------------------------------------------------------------
# nuScenes-style table fixtures


def synthetic_tables(
    root: Path,
    n_keyframes: int,
    scene_name: str = "scene-0001",
    step_m: float = 1.0,
    yaw_step: float = 0.0,
    with_sensor_table: bool = True,
):
    """Write a one-scene table set moving +x at step_m per 0.5 s tick."""
    root.mkdir(parents=True, exist_ok=True)
    scene_token = "sc-0001"
    samples, sample_data, ego_poses = [], [], []
    t0 = 1_600_000_000_000_000
    for k in range(n_keyframes):
        token = f"sa-{k:04d}"
        yaw = yaw_step * k
        samples.append(
            {
                "token": token,
                "timestamp": t0 + k * 500_000,
                "scene_token": scene_token,
                "prev": f"sa-{k - 1:04d}" if k > 0 else "",
                "next": f"sa-{k + 1:04d}" if k < n_keyframes - 1 else "",
            }
        )
        ego_poses.append(
            {
                "token": f"ep-{k:04d}",
                "timestamp": t0 + k * 500_000,
                "translation": [step_m * k, 0.0, 0.0],
                "rotation": [math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)],
            }
        )
        sample_data.append(
            {
                "token": f"sd-{k:04d}",
                "sample_token": token,
                "ego_pose_token": f"ep-{k:04d}",
                "calibrated_sensor_token": "cs-front",
                "filename": f"samples/CAM_FRONT/{k:04d}.jpg",
                "fileformat": "jpg",
                "is_key_frame": True,
                "timestamp": t0 + k * 500_000,
            }
        )
    tables = {
        "scene": [
            {
                "token": scene_token,
                "name": scene_name,
                "description": "synthetic",
                "nbr_samples": n_keyframes,
                "first_sample_token": "sa-0000" if n_keyframes else "",
                "last_sample_token": f"sa-{n_keyframes - 1:04d}" if n_keyframes else "",
            }
        ],
        "sample": samples,
        "sample_data": sample_data,
        "ego_pose": ego_poses,
        "calibrated_sensor": [
            {"token": "cs-front", "sensor_token": "se-front"}
        ],
    }
    if with_sensor_table:
        tables["sensor"] = [
            {"token": "se-front", "channel": "CAM_FRONT", "modality": "camera"}
        ]
    for name, rows in tables.items():
        (root / f"{name}.json").write_text(json.dumps(rows), encoding="utf-8")
    return scene_token
