"""Request/response models for the HTTP surface."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class IngestRequest(BaseModel):
    dataroot: str
    out: str
    scenes: Optional[list[str]] = None
    scenes_path: Optional[str] = None


class IngestResponse(BaseModel):
    scenes: int
    frames: int
    out: str


class ProviderModel(BaseModel):
    kind: str
    model_name: str
    endpoint: str = ""
    api_key_env: str = ""
    price_in: float = 0.0
    price_out: float = 0.0
    max_retries: int = 3
    min_request_interval: float = 0.0
    script_path: str = ""
    call_log_path: str = ""


class RunConfigModel(BaseModel):
    run_id: str
    scenario_path: str
    output_dir: str
    provider: ProviderModel
    templates: Optional[list[str]] = None
    image_root: Optional[str] = None
    max_workers: int = Field(default=4, ge=1)
    frame_limit: Optional[int] = Field(default=None, ge=0)
    max_output_tokens: int = Field(default=2048, ge=1)
    temperature: Optional[float] = None


class RunRequest(BaseModel):
    config: RunConfigModel
    resume: bool = False
    limit: Optional[int] = Field(default=None, ge=0)
    normalize: bool = False


class RunStatus(BaseModel):
    run_id: str
    state: str  # pending | running | done | failed
    frames_in_scope: int = 0
    frames_done: int = 0
    newly_run: int = 0
    frame_errors: int = 0
    error: Optional[str] = None
    results_path: Optional[str] = None
    manifest_path: Optional[str] = None


class ReportRequest(BaseModel):
    runs: list[str]
    out: str
    allow_mixed_decisions: bool = False


class ExcludedFrame(BaseModel):
    frame_id: str
    models: list[str]


class ReportResponse(BaseModel):
    report_path: str
    csv_path: str
    summaries_path: str
    overlay_dir: str
    retained: int
    universe: int
    retention_rate: float
    excluded: list[ExcludedFrame]


class HealthResponse(BaseModel):
    status: str
    version: str
