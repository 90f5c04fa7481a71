"""FastAPI application exposing the pipeline commands.

Offline commands (snapshots, build, evaluate) run synchronously and
exchange file paths, not payloads; predict serves individual online
queries from a bundle directory.  Domain errors map onto a uniform error
body whose ``kind`` the command-line client translates into exit codes.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import PRESET_NAMES, RunConfig, parse_config
from ..errors import (
    ConfigError,
    FormatError,
    HashMismatchError,
    InvalidArgument,
    KinromError,
    NumericalFailure,
)
from ..pipeline import run_build, run_evaluate, run_predict, run_report, run_snapshots
from ..presets import preset_config
from . import schemas


def _resolve_config(req: schemas.ConfiguredRequest, command: str) -> RunConfig:
    if (req.config is None) == (req.preset is None):
        raise ConfigError(["provide exactly one of 'config' or 'preset'"])
    if req.preset is not None:
        if req.preset not in PRESET_NAMES:
            raise ConfigError([f"unknown preset {req.preset!r}"])
        cfg = preset_config(req.preset)
    else:
        cfg = parse_config(req.config)
    if req.overrides is None:
        return cfg
    data = cfg.model_dump(mode="json")
    ov = req.overrides
    if ov.method is not None:
        data["rom"]["method"] = ov.method
    if ov.pod_tol is not None:
        data["rom"]["pod_tol"] = ov.pod_tol
    if ov.k is not None:
        data["rom"]["k"] = ov.k
    if ov.epochs is not None:
        data["rom"]["ae"]["epochs"] = ov.epochs
    if ov.seed is not None:
        data["sampling"]["seed"] = ov.seed
        data["rom"]["ae"]["seed"] = ov.seed
    if ov.threads is not None:
        data["threads"] = ov.threads
    if ov.sample_stride is not None:
        data["sampling"]["sample_stride"] = ov.sample_stride
        data["sampling"]["sample_times"] = None
    if ov.out is not None:
        key = {"snapshots": "snapshots", "build": "bundle", "evaluate": "reports"}[command]
        data["io"][key] = ov.out
    return parse_config(data)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def create_app() -> FastAPI:
    app = FastAPI(
        title="kinrom",
        version=__version__,
        description=(
            "Reduced order models for parametric kinetic transport: snapshot "
            "generation, partitioned linear and hybrid model construction, and "
            "non-intrusive online prediction."
        ),
    )

    @app.exception_handler(KinromError)
    async def _domain_error(request: Request, exc: KinromError):
        if isinstance(exc, (ConfigError, InvalidArgument)):
            kind, status = "config", 400
        elif isinstance(exc, NumericalFailure):
            kind, status = "numerical", 500
        elif isinstance(exc, (FormatError, HashMismatchError)):
            kind, status = "io", 409
        else:
            kind, status = "io", 500
        return JSONResponse(
            status_code=status,
            content={"error": {"kind": kind, "message": str(exc)}},
        )

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=404,
            content={"error": {"kind": "io", "message": str(exc)}},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/presets")
    def presets():
        return {"presets": list(PRESET_NAMES)}

    @app.get("/config/schema")
    def config_schema():
        return RunConfig.model_json_schema()

    @app.post("/snapshots", response_model=schemas.SnapshotsResponse)
    def snapshots(req: schemas.ConfiguredRequest):
        cfg = _resolve_config(req, "snapshots")
        return schemas.SnapshotsResponse(**run_snapshots(cfg).__dict__)

    @app.post("/build", response_model=schemas.BuildResponse)
    def build(req: schemas.BuildRequest):
        cfg = _resolve_config(req, "build")
        result = run_build(cfg, snapshots_path=req.snapshots_path)
        return schemas.BuildResponse(**result.__dict__)

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        result = run_predict(
            req.bundle_dir, req.t, req.mu, include_state=req.include_state
        )
        return schemas.PredictResponse(**result.__dict__)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        cfg = _resolve_config(req, "evaluate")
        result = run_evaluate(
            cfg,
            bundle_dir=req.bundle_dir,
            snapshots_path=req.snapshots_path,
            force=req.force,
        )
        payload = result.__dict__.copy()
        payload["e_f"] = _clean(payload["e_f"]) or 0.0
        payload["e_rho"] = _clean(payload["e_rho"]) or 0.0
        for row in payload["intervals"]:
            for key, value in row.items():
                if isinstance(value, float) and not math.isfinite(value):
                    row[key] = 0.0
        return schemas.EvaluateResponse(**payload)

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest):
        return schemas.ReportResponse(**run_report(req.rows_csv, req.out_dir).__dict__)

    return app


app = create_app()
