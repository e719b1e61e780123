from __future__ import annotations

import json

import pytest

from drivebench.errors import ConfigError
from drivebench.metrics import displacement_errors
from drivebench.records import read_results
from drivebench.runner import execute_run, load_run_config

from conftest import run_config_dict


def _run(scenario, tmp_path, **kwargs):
    raw = run_config_dict(scenario, tmp_path, **kwargs.pop("config_overrides", {}))
    config = load_run_config(raw)
    return raw, execute_run(config, raw_config=raw, **kwargs)


class TestExecuteRun:
    def test_full_scripted_run(self, scenario, tmp_path):
        raw, outcome = _run(scenario, tmp_path)
        assert outcome.frames_in_scope == 10
        assert outcome.completed == 10
        assert outcome.newly_run == 10
        assert outcome.frame_errors == 0
        results = read_results(outcome.results_path)
        assert len(results) == 10
        assert all(r.parse_status == "strict" for r in results)
        # scripted commands reproduce the stored ground truth exactly
        frames = {f.frame_id: f for f in scenario["frames"]}
        for r in results:
            m = displacement_errors(r.predicted, frames[r.frame_id].ground_truth)
            assert m.ade_avg == 0.0
            assert m.fde == 0.0

    def test_results_sorted_by_frame_id(self, scenario, tmp_path):
        _, outcome = _run(scenario, tmp_path)
        ids = [r.frame_id for r in read_results(outcome.results_path)]
        assert ids == sorted(ids)

    def test_three_calls_per_frame(self, scenario, tmp_path):
        log_path = tmp_path / "calls.jsonl"
        overrides = run_config_dict(scenario, tmp_path)
        overrides["provider"]["call_log_path"] = str(log_path)
        config = load_run_config(overrides)
        execute_run(config, raw_config=overrides)
        calls = [json.loads(l) for l in log_path.read_text().splitlines()]
        assert len(calls) == 30
        per_frame = {}
        for call in calls:
            per_frame.setdefault(call["frame_id"], []).append(call["stage"])
        assert all(stages == [1, 2, 3] for stages in per_frame.values())

    def test_limit_then_resume_runs_only_remainder(self, scenario, tmp_path):
        log_path = tmp_path / "calls.jsonl"
        raw = run_config_dict(scenario, tmp_path)
        raw["provider"]["call_log_path"] = str(log_path)
        config = load_run_config(raw)
        first = execute_run(config, raw_config=raw, limit=4)
        assert first.newly_run == 4
        calls_first = len(log_path.read_text().splitlines())
        assert calls_first == 12

        second = execute_run(config, raw_config=raw, resume=True)
        assert second.newly_run == 6
        assert second.completed == 10
        calls_total = len(log_path.read_text().splitlines())
        assert calls_total == 30  # no duplicate provider calls
        results = read_results(second.results_path)
        assert len(results) == 10

    def test_restart_without_resume_refuses(self, scenario, tmp_path):
        raw, _ = _run(scenario, tmp_path)
        config = load_run_config(raw)
        with pytest.raises(ConfigError):
            execute_run(config, raw_config=raw)

    def test_resume_with_changed_config_refuses(self, scenario, tmp_path):
        raw, _ = _run(scenario, tmp_path)
        changed = dict(raw)
        changed["max_workers"] = 9
        config = load_run_config(changed)
        with pytest.raises(ConfigError):
            execute_run(config, raw_config=changed, resume=True)

    def test_two_runs_byte_identical_normalized(self, scenario, tmp_path):
        _, outcome_a = _run(
            scenario, tmp_path, normalize=True, config_overrides={"run_id": "run-a"}
        )
        _, outcome_b = _run(
            scenario, tmp_path, normalize=True, config_overrides={"run_id": "run-b"}
        )
        norm_a = (tmp_path / "runs" / "run-a" / "results.normalized.jsonl").read_bytes()
        norm_b = (tmp_path / "runs" / "run-b" / "results.normalized.jsonl").read_bytes()
        assert norm_a == norm_b

    def test_manifest_ledger_unique_and_complete(self, scenario, tmp_path):
        _, outcome = _run(scenario, tmp_path)
        manifest = json.loads((tmp_path / "runs" / "run-a" / "manifest.json").read_text())
        ids = [entry["frame_id"] for entry in manifest["frames"]]
        assert len(ids) == len(set(ids)) == 10
        assert manifest["run_id"] == "run-a"
        assert manifest["config_hash"]

    def test_decision_record_written(self, scenario, tmp_path):
        _run(scenario, tmp_path)
        snapshot = json.loads((tmp_path / "runs" / "run-a" / "config.json").read_text())
        record = snapshot["decision_record"]
        assert record["history_order"] == "oldest-first"
        assert record["correction_rule"] == "interleaved-twelve-values"
        assert record["image_per_stage"] is True
        assert record["temperature"] == "provider-default"

    def test_transport_failures_counted_not_fatal(self, scenario, tmp_path):
        # make one frame's stage 2 fail beyond retries
        script_raw = json.loads(scenario["script_path"].read_text())
        victim = scenario["frames"][3].frame_id
        script_raw[f"{victim}:2"]["fail_times"] = 99
        scenario["script_path"].write_text(json.dumps(script_raw))

        raw = run_config_dict(scenario, tmp_path)
        raw["provider"]["max_retries"] = 0
        raw["provider"]["min_request_interval"] = 0.0
        config = load_run_config(raw)
        outcome = execute_run(config, raw_config=raw)
        assert outcome.frame_errors == 1
        assert outcome.completed == 10
        results = {r.frame_id: r for r in read_results(outcome.results_path)}
        assert results[victim].parse_status == "failed"
        assert results[victim].error_class == "transport"
        others = [r for fid, r in results.items() if fid != victim]
        assert all(r.parse_status == "strict" for r in others)

    def test_single_worker_matches_parallel(self, scenario, tmp_path):
        _run(
            scenario,
            tmp_path,
            normalize=True,
            config_overrides={"run_id": "serial", "max_workers": 1},
        )
        _run(
            scenario,
            tmp_path,
            normalize=True,
            config_overrides={"run_id": "parallel", "max_workers": 8},
        )
        a = (tmp_path / "runs" / "serial" / "results.normalized.jsonl").read_bytes()
        b = (tmp_path / "runs" / "parallel" / "results.normalized.jsonl").read_bytes()
        assert a == b

    def test_progress_callback_sees_all_frames(self, scenario, tmp_path):
        seen = []
        raw = run_config_dict(scenario, tmp_path)
        config = load_run_config(raw)
        execute_run(config, raw_config=raw, progress=lambda d, t: seen.append((d, t)))
        assert seen[-1] == (10, 10)
        assert [d for d, _ in seen] == sorted(d for d, _ in seen)


class TestLoadRunConfig:
    def test_missing_field_named(self, scenario, tmp_path):
        raw = run_config_dict(scenario, tmp_path)
        del raw["run_id"]
        with pytest.raises(ConfigError) as err:
            load_run_config(raw)
        assert "run_id" in str(err.value)

    def test_bad_worker_count(self, scenario, tmp_path):
        raw = run_config_dict(scenario, tmp_path, max_workers=0)
        with pytest.raises(ConfigError):
            load_run_config(raw)

    def test_invalid_scenario_frame_rejected(self, scenario, tmp_path):
        bad = scenario["scenario_path"].read_text().splitlines()
        record = json.loads(bad[0])
        record["history"] = record["history"][:4]
        with pytest.raises(Exception):
            # decode alone flags the schema break
            from drivebench.records import frame_from_dict

            frame_from_dict(record)
