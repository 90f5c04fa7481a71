"""Declarative run configuration: schema, validation, and hashing.

Configs are YAML (or JSON) documents validated into pydantic models with
unknown keys rejected; every violation is reported together.  The content
hash of the validated config travels with every output file so downstream
commands can detect mismatched inputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_config", "config_hash", "PRESET_NAMES"]

PRESET_NAMES = ("example1", "example2")

ParamValue = Union[float, Literal["mu"]]


class Region(BaseModel):
    """Piecewise-constant segment: the value applies for x <= upto."""

    model_config = ConfigDict(extra="forbid")
    upto: float
    value: ParamValue


class GaussianInitial(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["gaussian"] = "gaussian"
    center: float
    width_sq: float
    amplitude: float


class CustomProblem(BaseModel):
    model_config = ConfigDict(extra="forbid")
    domain: tuple[float, float]
    n_elements: int = Field(ge=1)
    n_velocities: int = Field(ge=1)
    dt: float = Field(gt=0)
    final_time: float = Field(gt=0)
    sigma_s: list[Region]
    sigma_a: list[Region]
    source: list[Region]
    inflow_left: ParamValue = 0.0
    inflow_right: ParamValue = 0.0
    initial: Union[Literal["zero"], GaussianInitial] = "zero"


class ProblemBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    preset: Optional[Literal["example1", "example2"]] = None
    custom: Optional[CustomProblem] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.preset is None) == (self.custom is None):
            raise ValueError("specify exactly one of 'preset' or 'custom'")
        return self


class LinearParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    start: float
    step: float
    count: int = Field(ge=1)


class RandomParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    count: int = Field(ge=1)
    range: tuple[float, float]


class SamplingBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    training_params: Union[LinearParams, list[float]]
    sample_stride: Optional[int] = Field(default=None, ge=1)
    sample_times: Optional[list[float]] = None
    test_params: Union[RandomParams, list[float]]
    test_times: Union[Literal["all"], list[float]] = "all"
    seed: int = 0

    @model_validator(mode="after")
    def _one_time_source(self):
        if (self.sample_stride is None) == (self.sample_times is None):
            raise ValueError("specify exactly one of 'sample_stride' or 'sample_times'")
        return self

    def resolve_training_params(self) -> np.ndarray:
        tp = self.training_params
        if isinstance(tp, LinearParams):
            return tp.start + tp.step * np.arange(tp.count)
        return np.asarray(tp, dtype=np.float64)

    def resolve_test_params(self) -> np.ndarray:
        tp = self.test_params
        if isinstance(tp, RandomParams):
            rng = np.random.default_rng(self.seed)
            lo, hi = tp.range
            return rng.uniform(lo, hi, size=tp.count)
        return np.asarray(tp, dtype=np.float64)


class AeBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    latent: int = Field(default=8, ge=1)
    channels: tuple[int, int, int, int] = (24, 24, 24, 12)
    epochs: int = Field(default=2000, ge=1)
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    schedule: Literal["plateau", "step", "constant"] = "plateau"
    weight_decay: float = Field(default=0.0, ge=0)
    seed: int = 0


class RomBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    method: Literal["pod", "uniform", "adaptive", "hybrid"] = "pod"
    pod_tol: float = Field(default=1e-4, gt=0, lt=1)
    rule: Literal["energy", "spectral"] = "energy"
    k: int = Field(default=4, ge=1)
    r_max: int = Field(default=15, ge=1)
    r_min: int = Field(default=5, ge=0)
    n_iter: int = Field(default=20, ge=1)
    equilibrium_detection: bool = True
    tau_min: float = Field(default=0.0, ge=0)
    ae: AeBlock = Field(default_factory=AeBlock)


class IoBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    workdir: str = "kinrom_out"
    snapshots: Optional[str] = None
    bundle: Optional[str] = None
    reports: Optional[str] = None

    def snapshots_path(self) -> Path:
        return Path(self.snapshots) if self.snapshots else Path(self.workdir) / "snapshots.bin"

    def bundle_dir(self) -> Path:
        return Path(self.bundle) if self.bundle else Path(self.workdir) / "bundle"

    def reports_dir(self) -> Path:
        return Path(self.reports) if self.reports else Path(self.workdir) / "reports"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    problem: ProblemBlock
    sampling: SamplingBlock
    rom: RomBlock = Field(default_factory=RomBlock)
    io: IoBlock = Field(default_factory=IoBlock)
    threads: int = Field(default=1, ge=1)


def _violations(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"])
        out.append(f"{loc or '<root>'}: {err['msg']}")
    return out


def parse_config(data: dict) -> RunConfig:
    """Validate a raw mapping; every schema violation is reported at once."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_violations(exc)) from exc


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML/JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["config document must be a mapping"])
    return parse_config(data)


def config_hash(cfg: RunConfig) -> str:
    """Stable content hash of the validated configuration."""
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
