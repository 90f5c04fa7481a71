"""Request and response models of the HTTP API."""

from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class Overrides(BaseModel):
    """Small command-line style patches applied on top of a config."""

    model_config = ConfigDict(extra="forbid")
    method: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    out: Optional[str] = None
    pod_tol: Optional[float] = None
    k: Optional[int] = None
    epochs: Optional[int] = None
    sample_stride: Optional[int] = None


class ConfiguredRequest(BaseModel):
    """Either a full inline config or a preset name, plus overrides."""

    model_config = ConfigDict(extra="forbid")
    config: Optional[dict] = None
    preset: Optional[str] = None
    overrides: Optional[Overrides] = None


class SnapshotsResponse(BaseModel):
    path: str
    n_dofs: int
    n_snapshots: int
    n_times: int
    n_params: int
    config_hash: str
    elapsed_s: float


class BuildRequest(ConfiguredRequest):
    snapshots_path: Optional[str] = None


class BuildResponse(BaseModel):
    bundle_dir: str
    method: str
    boundaries: list[float]
    latent_dims: list[int]
    kinds: list[str]
    iterations: int
    converged: bool
    config_hash: str
    elapsed_s: float
    sweep_history: list = Field(default_factory=list)


class PredictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    bundle_dir: str
    t: float
    mu: Union[float, list[float]]
    include_state: bool = False


class PredictResponse(BaseModel):
    t: float
    mu: Union[float, list[float]]
    interval: int
    online_us: float
    rho: Optional[list[float]] = None
    state: Optional[list[float]] = None


class EvaluateRequest(ConfiguredRequest):
    bundle_dir: Optional[str] = None
    snapshots_path: Optional[str] = None
    force: bool = False


class IntervalSummary(BaseModel):
    interval: int
    t_start: float
    t_end: float
    kind: str
    latent_dim: int
    n_cases: int
    mean_online_us: float
    total_online_s: float
    e_f_mean: float


class EvaluateResponse(BaseModel):
    e_f: float
    e_rho: float
    n_cases: int
    rows_csv: str
    summary_csv: str
    intervals: list[IntervalSummary]
    config_hash: str
    elapsed_s: float


class ReportRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    rows_csv: str
    out_dir: str


class ReportResponse(BaseModel):
    files: list[str]


class ErrorBody(BaseModel):
    kind: str  # config | numerical | io
    message: str
