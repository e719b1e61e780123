"""HTTP service over the core package.

Ingest and report calls run inside the request; runs are long-lived, so
POST /runs schedules a background job and returns 202 immediately.
Clients poll GET /runs/{run_id}. Job state lives in memory only — run
progress durable across service restarts is what the on-disk ledger is
for (resubmit with resume=true after a restart).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigError, DrivebenchError, IngestError, ReportError
from ..ingest import build_frames, load_tables, write_scenarios
from ..reporting import generate_report
from ..runner import execute_run, load_run_config
from .schemas import (
    ExcludedFrame,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunStatus,
)


@dataclass
class _Job:
    status: RunStatus
    thread: threading.Thread | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, _Job] = {}
        self._lock = threading.Lock()

    def create(self, run_id: str) -> _Job:
        with self._lock:
            existing = self._jobs.get(run_id)
            if existing is not None and existing.status.state in ("pending", "running"):
                raise KeyError(run_id)
            job = _Job(status=RunStatus(run_id=run_id, state="pending"))
            self._jobs[run_id] = job
            return job

    def get(self, run_id: str) -> _Job | None:
        with self._lock:
            return self._jobs.get(run_id)


def create_app() -> FastAPI:
    app = FastAPI(title="drivebench", version=__version__)
    registry = JobRegistry()
    app.state.jobs = registry

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=IngestResponse)
    def ingest(request: IngestRequest) -> IngestResponse:
        scenes = list(request.scenes or [])
        if request.scenes_path:
            try:
                with open(request.scenes_path, "r", encoding="utf-8") as f:
                    scenes += [line.strip() for line in f if line.strip()]
            except OSError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            tables = load_tables(request.dataroot)
            frames = []
            for scene_id in scenes:
                frames.extend(build_frames(tables, scene_id))
            count = write_scenarios(frames, request.out)
        except (IngestError, OSError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return IngestResponse(scenes=len(scenes), frames=count, out=request.out)

    @app.post("/runs", response_model=RunStatus, status_code=202)
    def submit_run(request: RunRequest) -> RunStatus:
        raw = request.config.model_dump()
        try:
            config = load_run_config(raw)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            job = registry.create(config.run_id)
        except KeyError:
            raise HTTPException(
                status_code=409, detail=f"run {config.run_id!r} is already active"
            ) from None

        def _progress(done: int, total: int):
            with job.lock:
                job.status.state = "running"
                job.status.frames_done = done
                job.status.frames_in_scope = total

        def _execute():
            with job.lock:
                job.status.state = "running"
            try:
                outcome = execute_run(
                    config,
                    raw_config=raw,
                    resume=request.resume,
                    limit=request.limit,
                    normalize=request.normalize,
                    progress=_progress,
                )
            except DrivebenchError as exc:
                with job.lock:
                    job.status.state = "failed"
                    job.status.error = str(exc)
                return
            except Exception as exc:  # surfaced to the client, not lost
                with job.lock:
                    job.status.state = "failed"
                    job.status.error = f"{type(exc).__name__}: {exc}"
                return
            with job.lock:
                job.status.state = "done"
                job.status.frames_in_scope = outcome.frames_in_scope
                job.status.frames_done = outcome.completed
                job.status.newly_run = outcome.newly_run
                job.status.frame_errors = outcome.frame_errors
                job.status.results_path = outcome.results_path
                job.status.manifest_path = outcome.manifest_path

        thread = threading.Thread(target=_execute, name=f"run-{config.run_id}")
        job.thread = thread
        thread.start()
        with job.lock:
            return job.status.model_copy()

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str) -> RunStatus:
        job = registry.get(run_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        with job.lock:
            return job.status.model_copy()

    @app.post("/reports", response_model=ReportResponse)
    def report(request: ReportRequest) -> ReportResponse:
        try:
            bundle = generate_report(
                request.runs,
                request.out,
                allow_mixed_decisions=request.allow_mixed_decisions,
            )
        except (ReportError, ConfigError, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        fr = bundle.filter_report
        universe = len(fr.retained_frame_ids) + len(fr.excluded)
        return ReportResponse(
            report_path=bundle.report_path,
            csv_path=bundle.csv_path,
            summaries_path=bundle.summaries_path,
            overlay_dir=bundle.overlay_dir,
            retained=len(fr.retained_frame_ids),
            universe=universe,
            retention_rate=fr.retention_rate,
            excluded=[
                ExcludedFrame(frame_id=k, models=list(v))
                for k, v in fr.excluded.items()
            ],
        )

    return app
