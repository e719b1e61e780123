"""Batch execution of the per-frame pipeline with resume support.

A run owns a directory <output_dir>/<run_id>/ containing:

  config.json    frozen config snapshot + decision record
  manifest.json  run metadata and the per-frame completion ledger
  results.jsonl  one FrameResult per line, sorted by frame_id on exit
  results.normalized.jsonl  optional copy with latency fields zeroed,
                 for byte-level comparison across runs

Frames execute on a bounded worker pool; a single writer thread (the
caller) appends each result as it completes, so a killed run can resume:
restarting with the same run_id skips every frame already in the ledger
and never re-invokes the provider for it. Parse failures are data, not
faults; only transport/unreadable-image failures count as frame errors.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConfigError
from .pipeline import default_templates, load_templates, run_frame
from .providers import Provider, ProviderConfig, make_provider
from .records import (
    FrameResult,
    encode_result,
    read_frames,
    read_results,
    validate_frame,
)

FATAL_ERROR_CLASSES = ("transport", "unreadable-image")


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    scenario_path: str
    output_dir: str
    provider: ProviderConfig
    template_paths: tuple[str, str, str] | None = None
    image_root: str | None = None
    max_workers: int = 4
    frame_limit: int | None = None
    max_output_tokens: int = 2048
    temperature: float | None = None
    decision_record: dict = field(default_factory=dict)

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.run_id


def decision_record_for(config_raw: dict) -> dict:
    """Snapshot of every comparability-relevant setting for this build."""
    temperature = config_raw.get("temperature")
    return {
        "history_order": "oldest-first",
        "correction_rule": "interleaved-twelve-values",
        "image_per_stage": True,
        "tick_seconds": 0.5,
        "horizon_steps": 6,
        "temperature": "provider-default" if temperature is None else temperature,
    }


def load_run_config(raw: dict) -> RunConfig:
    try:
        provider = ProviderConfig(
            kind=raw["provider"]["kind"],
            model_name=raw["provider"]["model_name"],
            endpoint=raw["provider"].get("endpoint", ""),
            api_key_env=raw["provider"].get("api_key_env", ""),
            price_in=float(raw["provider"].get("price_in", 0.0)),
            price_out=float(raw["provider"].get("price_out", 0.0)),
            max_retries=int(raw["provider"].get("max_retries", 3)),
            min_request_interval=float(
                raw["provider"].get("min_request_interval", 0.0)
            ),
            script_path=raw["provider"].get("script_path", ""),
            call_log_path=raw["provider"].get("call_log_path", ""),
        )
        templates = raw.get("templates")
        if templates is not None:
            templates = tuple(templates)
            if len(templates) != 3:
                raise ConfigError("templates must list exactly 3 paths")
        config = RunConfig(
            run_id=raw["run_id"],
            scenario_path=raw["scenario_path"],
            output_dir=raw["output_dir"],
            provider=provider,
            template_paths=templates,
            image_root=raw.get("image_root"),
            max_workers=int(raw.get("max_workers", 4)),
            frame_limit=raw.get("frame_limit"),
            max_output_tokens=int(raw.get("max_output_tokens", 2048)),
            temperature=raw.get("temperature"),
            decision_record=decision_record_for(raw),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config field: {exc.args[0]}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if config.max_workers < 1:
        raise ConfigError("max_workers must be >= 1")
    if config.frame_limit is not None and config.frame_limit < 0:
        raise ConfigError("frame_limit must be >= 0")
    return config


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunOutcome:
    run_id: str
    frames_in_scope: int
    completed: int
    newly_run: int
    frame_errors: int
    results_path: str
    manifest_path: str

    @property
    def had_frame_errors(self) -> bool:
        return self.frame_errors > 0


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def normalize_result(result: FrameResult) -> FrameResult:
    """Zero the wall-clock fields so two runs can be compared bytewise."""
    return FrameResult(
        frame_id=result.frame_id,
        stage_texts=result.stage_texts,
        parse_status=result.parse_status,
        usage=result.usage,
        latency_stages=(0.0, 0.0, 0.0),
        latency_total=0.0,
        actions=result.actions,
        predicted=result.predicted,
        error_class=result.error_class,
    )


def write_results_sorted(results, path, normalized: bool = False) -> None:
    ordered = sorted(results, key=lambda r: r.frame_id)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in ordered:
            if normalized:
                r = normalize_result(r)
            f.write(encode_result(r) + "\n")


def execute_run(
    config: RunConfig,
    raw_config: dict | None = None,
    resume: bool = False,
    limit: int | None = None,
    normalize: bool = False,
    provider: Provider | None = None,
    progress=None,
) -> RunOutcome:
    frames = read_frames(config.scenario_path)
    for frame in frames:
        violations = validate_frame(frame)
        if violations:
            raise ConfigError(
                f"scenario frame {frame.frame_id!r} violates {violations}"
            )
    ids = [f.frame_id for f in frames]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario file has duplicate frame_ids")

    effective_limit = limit if limit is not None else config.frame_limit
    scope = frames if effective_limit is None else frames[:effective_limit]

    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    results_path = run_dir / "results.jsonl"
    manifest_path = run_dir / "manifest.json"

    raw = raw_config or {}
    run_hash = config_hash(raw)
    existing: list[FrameResult] = []
    if results_path.exists() and results_path.stat().st_size > 0:
        if not resume:
            raise ConfigError(
                f"run {config.run_id!r} already has results; pass resume to continue"
            )
        if manifest_path.exists():
            old = json.loads(manifest_path.read_text(encoding="utf-8"))
            if raw and old.get("config_hash") not in ("", run_hash):
                raise ConfigError(
                    "resume config does not match the original run config"
                )
        existing = read_results(results_path)

    done_ids = {r.frame_id for r in existing}
    pending = [f for f in scope if f.frame_id not in done_ids]
    done_in_scope = len(scope) - len(pending)

    (run_dir / "config.json").write_text(
        json.dumps(
            {"config": raw, "decision_record": config.decision_record},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    if config.template_paths is not None:
        templates = load_templates(config.template_paths)
    else:
        templates = default_templates()
    image_root = (
        Path(config.image_root)
        if config.image_root is not None
        else Path(config.scenario_path).parent
    )
    owns_provider = provider is None
    if provider is None:
        provider = make_provider(config.provider)

    started_at = _utc_now()
    all_results = list(existing)
    newly_run = 0
    try:
        # Workers only compute; this thread is the single writer.
        with open(results_path, "a", encoding="utf-8", newline="\n") as sink:

            def _one(frame) -> FrameResult:
                return run_frame(
                    frame,
                    provider,
                    templates,
                    image_root=image_root,
                    max_output_tokens=config.max_output_tokens,
                    temperature=config.temperature,
                )

            if pending:
                with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
                    futures = {pool.submit(_one, f): f for f in pending}
                    for future in as_completed(futures):
                        result = future.result()
                        sink.write(encode_result(result) + "\n")
                        sink.flush()
                        all_results.append(result)
                        newly_run += 1
                        if progress is not None:
                            progress(done_in_scope + newly_run, len(scope))
    finally:
        if owns_provider and hasattr(provider, "close"):
            provider.close()

    write_results_sorted(all_results, results_path)
    if normalize:
        write_results_sorted(
            all_results, run_dir / "results.normalized.jsonl", normalized=True
        )

    ledger = [
        {
            "frame_id": r.frame_id,
            "parse_status": r.parse_status,
            "error_class": r.error_class,
        }
        for r in sorted(all_results, key=lambda r: r.frame_id)
    ]
    manifest = {
        "run_id": config.run_id,
        "config_hash": run_hash,
        "started_at": started_at,
        "finished_at": _utc_now(),
        "frames": ledger,
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )

    frame_errors = sum(
        1 for r in all_results if r.error_class in FATAL_ERROR_CLASSES
    )
    scope_ids = {f.frame_id for f in scope}
    return RunOutcome(
        run_id=config.run_id,
        frames_in_scope=len(scope),
        completed=sum(1 for r in all_results if r.frame_id in scope_ids),
        newly_run=newly_run,
        frame_errors=frame_errors,
        results_path=str(results_path),
        manifest_path=str(manifest_path),
    )
