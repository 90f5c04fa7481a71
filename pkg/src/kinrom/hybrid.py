"""Per-interval model selection and reduced-model bundle assembly.

An interval keeps a linear basis while its rank fits under ``r_max``.  When
it does not, the interval is either split (if the halves stay at least
``tau_min`` wide) or handed to a convolutional autoencoder: the nonlinear
map is reserved for windows where linear compression would force excessive
time refinement.  Each autoencoder trains only on its own interval's
snapshots, with normalization constants computed from that slice alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autoencoder import (
    AeArchitecture,
    AutoencoderModel,
    NormalizationConstants,
    TrainConfig,
    latent_coordinates,
    load_model,
    normalize_slice,
    save_model,
    train,
)
from .binio import read_arrays, write_arrays
from .errors import FormatError, InvalidArgument, NumericalFailure, UnsupportedVersion
from .partition import AdaptiveConfig, RankOracle, TimePartition, coarsen_refine_sweep
from .pod import PodBasis, build_pod
from .snapshots import SnapshotMatrix

__all__ = [
    "HybridConfig",
    "IntervalMap",
    "RomBundle",
    "decide",
    "plan_hybrid",
    "build_hybrid",
    "build_bundle",
    "save_bundle",
    "load_bundle",
]

_MANIFEST_VERSION = 1


@dataclass(frozen=True)
class HybridConfig:
    """Controls when an interval switches from a linear basis to an
    autoencoder, and how that autoencoder is built."""

    tau_min: float
    r_max: int
    latent: int
    channels: tuple[int, int, int, int] = (24, 24, 24, 12)
    training: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.tau_min < 0:
            raise InvalidArgument("tau_min must be nonnegative")
        if self.latent < 1:
            raise InvalidArgument("latent dimension must be at least 1")


def decide(width: float, rank: int, cfg: HybridConfig) -> str:
    """Choose the treatment of one interval: 'pod', 'refine', or
    'autoencoder'.

    The nonlinear map is used only when the rank exceeds ``r_max`` and a
    binary split would produce intervals narrower than ``tau_min``.
    """
    if rank <= cfg.r_max:
        return "pod"
    if width / 2.0 < cfg.tau_min:
        return "autoencoder"
    return "refine"


def plan_hybrid(
    s: SnapshotMatrix,
    initial: TimePartition,
    cfg: HybridConfig,
    adaptive: AdaptiveConfig,
    *,
    oracle: RankOracle | None = None,
    trace: list | None = None,
) -> TimePartition:
    """Adaptive partitioning with the autoencoder gate in place of
    unbounded refinement.

    Runs the usual refine/coarsen sweeps, except that an over-rich interval
    whose halves would violate ``tau_min`` is marked for an autoencoder and
    left intact.  Returns the final partition with ranks and the marked
    intervals; the decision history lands in ``trace`` when given.
    """
    if cfg.r_max != adaptive.r_max:
        raise InvalidArgument("hybrid and adaptive configs disagree on r_max")
    if oracle is None:
        oracle = RankOracle(s, adaptive.pod_tol, adaptive.rule)

    part = initial
    ranks = oracle.ranks(part)
    iterations = 0
    while True:
        widths = part.widths()
        decisions = [decide(widths[j], ranks[j], cfg) for j in range(part.n_intervals)]
        if trace is not None:
            trace.append(
                [
                    {
                        "interval": [float(b) for b in part.boundaries()[j : j + 2]],
                        "rank": int(ranks[j]),
                        "decision": decisions[j],
                    }
                    for j in range(part.n_intervals)
                ]
            )
        if _hybrid_goal_met(ranks, decisions, adaptive) or iterations >= adaptive.n_iter:
            break
        swept = coarsen_refine_sweep(part, ranks, adaptive, tau_min=cfg.tau_min)
        iterations += 1
        if swept.bounds == part.bounds:
            break
        part = swept
        ranks = oracle.ranks(part)

    widths = part.widths()
    ae = tuple(
        j
        for j in range(part.n_intervals)
        if decide(widths[j], ranks[j], cfg) == "autoencoder"
    )
    return TimePartition(
        part.times,
        part.bounds,
        ranks=tuple(ranks),
        iterations=iterations,
        converged=_hybrid_goal_met(ranks, [
            decide(widths[j], ranks[j], cfg) for j in range(part.n_intervals)
        ], adaptive),
        frozen=part.frozen,
        ae_intervals=ae,
    )


def _hybrid_goal_met(ranks, decisions, adaptive: AdaptiveConfig) -> bool:
    for j, (r, d) in enumerate(zip(ranks, decisions)):
        if d == "refine":
            return False
        if d == "autoencoder":
            continue
        tail = j == len(ranks) - 1
        if r < adaptive.r_min and not (adaptive.equilibrium_detection and tail):
            return False
    return True


@dataclass(frozen=True)
class IntervalMap:
    """Latent map of one time interval: a linear basis or an autoencoder."""

    kind: str  # 'pod' | 'ae'
    time_range: tuple[int, int]
    latent_dim: int
    coords: np.ndarray  # (latent_dim, n_times_local * n_params), snapshot column order
    basis: PodBasis | None = None
    model: AutoencoderModel | None = None
    constants: NormalizationConstants | None = None

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.kind not in ("pod", "ae"):
            raise InvalidArgument(f"unknown interval map kind {self.kind!r}")
        if self.coords.shape[0] != self.latent_dim:
            raise InvalidArgument("coordinate rows must equal the latent dimension")


@dataclass(frozen=True)
class RomBundle:
    """A complete reduced model: partition, per-interval maps, training
    coordinates, and the global mean offset."""

    partition: TimePartition
    maps: tuple[IntervalMap, ...]
    mean_offset: np.ndarray
    params: np.ndarray
    method: str
    pod_tol: float
    rule: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean_offset, dtype=np.float64)
        params = np.asarray(self.params, dtype=np.float64)
        mean.setflags(write=False)
        params.setflags(write=False)
        object.__setattr__(self, "mean_offset", mean)
        object.__setattr__(self, "params", params)
        if len(self.maps) != self.partition.n_intervals:
            raise InvalidArgument("need one interval map per partition interval")

    @property
    def times(self) -> np.ndarray:
        return self.partition.times

    @property
    def n_dofs(self) -> int:
        return self.mean_offset.size

    def latent_dims(self) -> list[int]:
        return [m.latent_dim for m in self.maps]

    def interval_of_time(self, t: float) -> int:
        times = self.partition.times
        hits = np.flatnonzero(np.isclose(times, t, rtol=1e-12, atol=1e-12))
        if hits.size != 1:
            raise InvalidArgument(f"time {t} is not a training sample time")
        return self.partition.interval_of_index(int(hits[0]))


def _pod_interval(s: SnapshotMatrix, i0: int, i1: int, tol: float, rule: str) -> IntervalMap:
    block = s.data[:, s.columns_for_time_range(i0, i1)]
    basis = build_pod(block, tol, rule)
    coords = basis.basis.T @ block
    return IntervalMap(
        kind="pod",
        time_range=(i0, i1),
        latent_dim=basis.rank,
        coords=coords,
        basis=basis,
    )


def _ae_interval(
    s: SnapshotMatrix,
    i0: int,
    i1: int,
    cfg: HybridConfig,
    n_velocities: int,
    seed: int,
) -> IntervalMap:
    cols = s.columns_for_time_range(i0, i1)
    raw = s.data[:, cols] + s.mean_offset[:, None]
    n_space = s.n_dofs // n_velocities
    samples, constants = normalize_slice(raw, s.times[i0:i1], n_velocities, n_space)
    model = AutoencoderModel.initialize(
        n_velocities, n_space, AeArchitecture(cfg.channels, cfg.latent), seed=seed
    )
    training = replace(cfg.training, seed=seed)
    try:
        model, history = train(model, samples, training)
    except NumericalFailure as exc:
        raise NumericalFailure(
            f"autoencoder training failed on interval times "
            f"[{s.times[i0]}, {s.times[i1 - 1]}]: {exc}",
            residual=exc.residual,
            iteration=exc.iteration,
        ) from exc
    coords = latent_coordinates(model, samples)
    return IntervalMap(
        kind="ae",
        time_range=(i0, i1),
        latent_dim=cfg.latent,
        coords=coords,
        model=model,
        constants=constants,
    )


def build_bundle(
    s: SnapshotMatrix,
    partition: TimePartition,
    pod_tol: float,
    rule: str = "energy",
    *,
    method: str = "pod",
    provenance: dict | None = None,
) -> RomBundle:
    """Piecewise-linear bundle: one basis per interval of ``partition``."""
    maps = tuple(
        _pod_interval(s, i0, i1, pod_tol, rule) for i0, i1 in partition.index_ranges()
    )
    ranked = TimePartition(
        partition.times,
        partition.bounds,
        ranks=tuple(m.latent_dim for m in maps),
        iterations=partition.iterations,
        converged=partition.converged,
        frozen=partition.frozen,
    )
    return RomBundle(
        partition=ranked,
        maps=maps,
        mean_offset=s.mean_offset,
        params=s.params,
        method=method,
        pod_tol=pod_tol,
        rule=rule,
        provenance=provenance or {},
    )


def build_hybrid(
    s: SnapshotMatrix,
    initial: TimePartition,
    cfg: HybridConfig,
    adaptive: AdaptiveConfig,
    n_velocities: int,
    *,
    oracle: RankOracle | None = None,
    provenance: dict | None = None,
) -> RomBundle:
    """Plan the hybrid partition, then build per-interval maps.

    One independent autoencoder is trained per marked interval, on that
    interval's snapshots only; every other interval keeps a linear basis.
    """
    trace: list = []
    plan = plan_hybrid(s, initial, cfg, adaptive, oracle=oracle, trace=trace)
    maps = []
    for j, (i0, i1) in enumerate(plan.index_ranges()):
        if j in plan.ae_intervals:
            maps.append(_ae_interval(s, i0, i1, cfg, n_velocities, seed=cfg.seed + j))
        else:
            maps.append(_pod_interval(s, i0, i1, adaptive.pod_tol, adaptive.rule))
    info = dict(provenance or {})
    info["decision_trace"] = trace
    info["ae_seed"] = cfg.seed
    return RomBundle(
        partition=plan,
        maps=tuple(maps),
        mean_offset=s.mean_offset,
        params=s.params,
        method="hybrid",
        pod_tol=adaptive.pod_tol,
        rule=adaptive.rule,
        provenance=info,
    )


def save_bundle(bundle: RomBundle, directory) -> None:
    """Write the bundle directory: manifest plus per-interval binaries."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    write_arrays(
        root / "mean.bin",
        b"KMEN",
        {},
        {"mean_offset": bundle.mean_offset},
    )
    intervals = []
    for j, m in enumerate(bundle.maps):
        coords_file = f"coords_{j:03d}.bin"
        write_arrays(
            root / coords_file,
            b"KCRD",
            {"time_range": list(m.time_range), "kind": m.kind},
            {"coords": m.coords},
        )
        entry = {
            "kind": m.kind,
            "time_range": list(m.time_range),
            "latent_dim": m.latent_dim,
            "coords_file": coords_file,
        }
        if m.kind == "pod":
            basis_file = f"basis_{j:03d}.bin"
            write_arrays(
                root / basis_file,
                b"KPOD",
                {"rank": m.basis.rank, "rule": m.basis.rule, "tolerance": m.basis.tolerance},
                {"basis": m.basis.basis, "singular_values": m.basis.singular_values},
            )
            entry["basis_file"] = basis_file
        else:
            model_file = f"model_{j:03d}.bin"
            save_model(root / model_file, m.model, m.constants)
            entry["model_file"] = model_file
        intervals.append(entry)

    manifest = {
        "format_version": _MANIFEST_VERSION,
        "method": bundle.method,
        "pod_tol": bundle.pod_tol,
        "rule": bundle.rule,
        "times": bundle.partition.times.tolist(),
        "bounds": list(bundle.partition.bounds),
        "ranks": list(bundle.partition.ranks or []),
        "iterations": bundle.partition.iterations,
        "converged": bundle.partition.converged,
        "frozen": list(bundle.partition.frozen),
        "ae_intervals": list(bundle.partition.ae_intervals),
        "params": bundle.params.tolist(),
        "intervals": intervals,
        "provenance": bundle.provenance,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_bundle(directory) -> RomBundle:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != _MANIFEST_VERSION:
        raise UnsupportedVersion(
            f"bundle format version {manifest.get('format_version')} not supported"
        )
    _, mean_arrays = read_arrays(root / "mean.bin", b"KMEN")
    times = np.array(manifest["times"])
    partition = TimePartition(
        times,
        tuple(manifest["bounds"]),
        ranks=tuple(manifest["ranks"]) or None,
        iterations=manifest["iterations"],
        converged=manifest["converged"],
        frozen=tuple(manifest["frozen"]),
        ae_intervals=tuple(manifest["ae_intervals"]),
    )
    maps = []
    for entry in manifest["intervals"]:
        _, coord_arrays = read_arrays(root / entry["coords_file"], b"KCRD")
        common = {
            "kind": entry["kind"],
            "time_range": tuple(entry["time_range"]),
            "latent_dim": entry["latent_dim"],
            "coords": coord_arrays["coords"],
        }
        if entry["kind"] == "pod":
            meta, arrays = read_arrays(root / entry["basis_file"], b"KPOD")
            basis = PodBasis(
                arrays["basis"],
                arrays["singular_values"],
                int(meta["rank"]),
                meta["rule"],
                float(meta["tolerance"]),
            )
            maps.append(IntervalMap(basis=basis, **common))
        else:
            model, constants = load_model(root / entry["model_file"])
            maps.append(IntervalMap(model=model, constants=constants, **common))
    return RomBundle(
        partition=partition,
        maps=tuple(maps),
        mean_offset=mean_arrays["mean_offset"],
        params=np.array(manifest["params"]),
        method=manifest["method"],
        pod_tol=manifest["pod_tol"],
        rule=manifest["rule"],
        provenance=manifest.get("provenance", {}),
    )
