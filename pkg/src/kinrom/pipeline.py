"""End-to-end commands: snapshots, build, predict, evaluate, report.

Each command takes a validated :class:`RunConfig`, produces files under the
config's io block, and stamps outputs with the config hash so mismatched
inputs are caught downstream.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import TrainConfig
from .config import RunConfig, config_hash
from .discretization import gauss_legendre
from .errors import HashMismatchError, InvalidArgument
from .fom import run as run_fom
from .hybrid import HybridConfig, build_bundle, build_hybrid, load_bundle, save_bundle
from .partition import AdaptiveConfig, adapt, uniform_partition
from .plots import line_chart_svg
from .predictor import evaluate as evaluate_bundle
from .predictor import predict as predict_bundle
from .presets import build_problem, resolve_sample_times
from .snapshots import generate, load as load_snapshots, save as save_snapshots

log = logging.getLogger("kinrom")

__all__ = [
    "SnapshotsResult",
    "BuildResult",
    "PredictResult",
    "EvaluateResult",
    "ReportResult",
    "run_snapshots",
    "run_build",
    "run_predict",
    "run_evaluate",
    "run_report",
]


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 22), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sidecar(path: Path, payload: dict) -> None:
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(payload, indent=2))


@dataclass
class SnapshotsResult:
    path: str
    n_dofs: int
    n_snapshots: int
    n_times: int
    n_params: int
    config_hash: str
    elapsed_s: float


def run_snapshots(cfg: RunConfig) -> SnapshotsResult:
    """Generate the training snapshot matrix and write it with provenance."""
    spec = build_problem(cfg.problem)
    times = resolve_sample_times(spec, cfg.sampling)
    params = cfg.sampling.resolve_training_params()
    chash = config_hash(cfg)
    t0 = time.perf_counter()
    s = generate(
        spec,
        params.tolist(),
        times.tolist(),
        threads=cfg.threads,
        meta={"config_hash": chash},
    )
    out = cfg.io.snapshots_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    save_snapshots(s, out)
    elapsed = time.perf_counter() - t0
    _sidecar(out, {
        "config_hash": chash,
        "code_version": __version__,
        "elapsed_s": elapsed,
        "n_dofs": s.n_dofs,
        "n_snapshots": s.n_snapshots,
        "file_sha256": _file_sha256(out),
    })
    log.info("snapshots: %d x %d written to %s (%.1f s)", s.n_dofs, s.n_snapshots, out, elapsed)
    return SnapshotsResult(
        str(out), s.n_dofs, s.n_snapshots, s.n_times, s.n_params, chash, elapsed
    )


@dataclass
class BuildResult:
    bundle_dir: str
    method: str
    boundaries: list[float]
    latent_dims: list[int]
    kinds: list[str]
    iterations: int
    converged: bool
    config_hash: str
    elapsed_s: float
    sweep_history: list = field(default_factory=list)


def _adaptive_config(cfg: RunConfig) -> AdaptiveConfig:
    rom = cfg.rom
    return AdaptiveConfig(
        r_max=rom.r_max,
        r_min=rom.r_min,
        n_iter=rom.n_iter,
        pod_tol=rom.pod_tol,
        rule=rom.rule,
        equilibrium_detection=rom.equilibrium_detection,
    )


def run_build(cfg: RunConfig, snapshots_path=None) -> BuildResult:
    """Build a reduced model bundle from a snapshot file."""
    spec = build_problem(cfg.problem)
    path = Path(snapshots_path) if snapshots_path else cfg.io.snapshots_path()
    s = load_snapshots(path)
    rom = cfg.rom
    chash = config_hash(cfg)
    provenance = {
        "config_hash": chash,
        "snapshot_sha256": _file_sha256(path),
        "snapshot_config_hash": s.meta.get("config_hash"),
        "code_version": __version__,
        "n_velocities": spec.n_velocities,
    }
    t0 = time.perf_counter()
    history: list = []
    final_time = float(spec.final_time)

    if rom.method == "pod":
        part = uniform_partition(final_time, 1, s.times)
        bundle = build_bundle(s, part, rom.pod_tol, rom.rule, method="pod", provenance=provenance)
    elif rom.method == "uniform":
        part = uniform_partition(final_time, rom.k, s.times)
        bundle = build_bundle(
            s, part, rom.pod_tol, rom.rule, method=f"uniform-{rom.k}", provenance=provenance
        )
    elif rom.method == "adaptive":
        initial = uniform_partition(final_time, rom.k, s.times)
        final = adapt(s, initial, _adaptive_config(cfg), history=history)
        provenance = {**provenance, "iterations": final.iterations}
        bundle = build_bundle(
            s, final, rom.pod_tol, rom.rule, method="adaptive", provenance=provenance
        )
    elif rom.method == "hybrid":
        initial = uniform_partition(final_time, rom.k, s.times)
        hybrid_cfg = HybridConfig(
            tau_min=rom.tau_min,
            r_max=rom.r_max,
            latent=rom.ae.latent,
            channels=rom.ae.channels,
            training=TrainConfig(
                epochs=rom.ae.epochs,
                batch_size=rom.ae.batch_size,
                learning_rate=rom.ae.learning_rate,
                schedule=rom.ae.schedule,
                weight_decay=rom.ae.weight_decay,
                seed=rom.ae.seed,
            ),
            seed=rom.ae.seed,
        )
        bundle = build_hybrid(
            s, initial, hybrid_cfg, _adaptive_config(cfg), spec.n_velocities,
            provenance=provenance,
        )
    else:  # pragma: no cover - schema forbids it
        raise InvalidArgument(f"unknown method {rom.method!r}")

    out = cfg.io.bundle_dir()
    save_bundle(bundle, out)
    elapsed = time.perf_counter() - t0
    result = BuildResult(
        bundle_dir=str(out),
        method=bundle.method,
        boundaries=[float(b) for b in bundle.partition.boundaries()],
        latent_dims=bundle.latent_dims(),
        kinds=[m.kind for m in bundle.maps],
        iterations=bundle.partition.iterations,
        converged=bundle.partition.converged,
        config_hash=chash,
        elapsed_s=elapsed,
        sweep_history=[
            {"bounds": list(h["bounds"]), "ranks": h["ranks"]} for h in history
        ],
    )
    log.info(
        "build: %s bundle with %d intervals -> %s (%.1f s)",
        bundle.method, bundle.partition.n_intervals, out, elapsed,
    )
    return result


@dataclass
class PredictResult:
    t: float
    mu: object
    interval: int
    online_us: float
    rho: list | None
    state: list | None


def run_predict(bundle_dir, t: float, mu, *, include_state: bool = False) -> PredictResult:
    """Predict one (time, parameter) case from a saved bundle."""
    bundle = load_bundle(bundle_dir)
    quad = None
    n_v = bundle.provenance.get("n_velocities")
    if n_v:
        quad = gauss_legendre(int(n_v))
    start = time.perf_counter()
    f, rho = predict_bundle(bundle, t, mu, quad=quad)
    online_us = (time.perf_counter() - start) * 1e6
    return PredictResult(
        t=float(t),
        mu=mu,
        interval=bundle.interval_of_time(t),
        online_us=online_us,
        rho=None if rho is None else [float(v) for v in rho],
        state=[float(v) for v in f] if include_state else None,
    )


@dataclass
class EvaluateResult:
    e_f: float
    e_rho: float
    n_cases: int
    rows_csv: str
    summary_csv: str
    intervals: list
    config_hash: str
    elapsed_s: float


def run_evaluate(
    cfg: RunConfig,
    bundle_dir=None,
    snapshots_path=None,
    *,
    force: bool = False,
) -> EvaluateResult:
    """Score a bundle against fresh full-order references for the test set.

    Refuses to mix a bundle with a snapshot file it was not built from,
    unless ``force`` is set.
    """
    spec = build_problem(cfg.problem)
    bundle = load_bundle(Path(bundle_dir) if bundle_dir else cfg.io.bundle_dir())
    snap_path = Path(snapshots_path) if snapshots_path else cfg.io.snapshots_path()
    if snap_path.exists() and bundle.provenance.get("snapshot_sha256"):
        actual = _file_sha256(snap_path)
        if actual != bundle.provenance["snapshot_sha256"] and not force:
            raise HashMismatchError(
                "bundle was built from a different snapshot file "
                f"({bundle.provenance['snapshot_sha256'][:12]} != {actual[:12]}); "
                "pass force to override"
            )

    test_params = cfg.sampling.resolve_test_params()
    if cfg.sampling.test_times == "all":
        test_times = bundle.partition.times
    else:
        test_times = np.asarray(cfg.sampling.test_times, dtype=np.float64)
    quad = gauss_legendre(spec.n_velocities)

    t0 = time.perf_counter()
    refs = np.empty((test_params.shape[0], test_times.size, spec.n_dofs))
    for ip, mu in enumerate(test_params):
        states = run_fom(spec, float(mu), [float(t) for t in test_times])
        for it, state in enumerate(states):
            refs[ip, it] = state.values
    report = evaluate_bundle(bundle, refs, test_times, test_params, quad=quad)
    elapsed = time.perf_counter() - t0

    out = cfg.io.reports_dir()
    out.mkdir(parents=True, exist_ok=True)
    rows_csv = out / "report.csv"
    summary_csv = out / "summary.csv"
    report.write_rows_csv(rows_csv)
    report.write_summary_csv(summary_csv, bundle)
    chash = config_hash(cfg)
    _sidecar(rows_csv, {"config_hash": chash, "code_version": __version__})
    if len(report.scored) == 0:
        log.warning("evaluate: empty test set, nothing scored")
    return EvaluateResult(
        e_f=report.e_f_mean,
        e_rho=report.e_rho_mean,
        n_cases=len(report.scored),
        rows_csv=str(rows_csv),
        summary_csv=str(summary_csv),
        intervals=report.interval_summary(bundle),
        config_hash=chash,
        elapsed_s=elapsed,
    )


@dataclass
class ReportResult:
    files: list[str]


def run_report(rows_csv, out_dir) -> ReportResult:
    """Render simple SVG charts from a per-case report CSV."""
    rows_csv = Path(rows_csv)
    if not rows_csv.exists():
        raise FileNotFoundError(f"report rows not found: {rows_csv}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_mu: dict = {}
    with open(rows_csv) as fh:
        for row in csv.DictReader(fh):
            if row["skipped"] == "True" or not row["e_f"]:
                continue
            by_mu.setdefault(row["mu_test"], {"x": [], "y": [], "yr": []})
            by_mu[row["mu_test"]]["x"].append(float(row["t_test"]))
            by_mu[row["mu_test"]]["y"].append(float(row["e_f"]))
            if row["e_rho"]:
                by_mu[row["mu_test"]]["yr"].append(float(row["e_rho"]))
    files = []
    if by_mu:
        series = [
            {"x": d["x"], "y": d["y"], "label": f"mu={float(mu):g}"}
            for mu, d in sorted(by_mu.items(), key=lambda kv: float(kv[0]))
        ]
        path = out / "error_vs_time.svg"
        line_chart_svg(
            path, series, title="Relative state error over time",
            xlabel="t", ylabel="log10 e_f", log_y=True,
        )
        files.append(str(path))
    return ReportResult(files=files)
