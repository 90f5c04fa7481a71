"""Non-intrusive online stage: interpolate latent coordinates across the
training parameters, reconstruct full states, and score prediction errors.

For a scalar parameter the componentwise interpolant is a natural cubic
spline over the training parameter grid (linear fallback below four
points).  For vector parameters, radial basis interpolation with the
quintic kernel phi(s) = s^5 is used; its kernel matrix depends only on the
training locations, so one factorization is shared across all times,
intervals, and latent components.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, interp1d
from scipy.linalg import lu_factor, lu_solve

from .discretization import AngularQuadrature
from .errors import ConditioningError, InsufficientData, InvalidArgument
from .hybrid import RomBundle

__all__ = [
    "interpolate_1d",
    "RbfInterpolator",
    "interpolate_rbf",
    "predict",
    "PredictionReport",
    "evaluate",
]


def interpolate_1d(coords: np.ndarray, params: np.ndarray, mu_new: float) -> np.ndarray:
    """Componentwise interpolation of latent coordinates at a new scalar
    parameter: natural cubic spline for four or more training parameters,
    linear for two or three."""
    coords = np.asarray(coords, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise InvalidArgument("scalar-parameter interpolation needs a 1D parameter grid")
    n_p = params.size
    if coords.ndim != 2 or coords.shape[1] != n_p:
        raise InvalidArgument("coordinates must be (latent_dim, n_params)")
    if n_p < 2:
        raise InsufficientData("at least two training parameters are required")
    if coords.shape[0] == 0:
        return np.zeros(0)
    if n_p >= 4:
        spline = CubicSpline(params, coords.T, bc_type="natural", extrapolate=True)
        return np.asarray(spline(mu_new), dtype=np.float64)
    lin = interp1d(params, coords, kind="linear", fill_value="extrapolate", axis=1)
    return np.asarray(lin(mu_new), dtype=np.float64)


class RbfInterpolator:
    """Quintic-kernel interpolation over scattered training parameters.

    The kernel system is factorized once per training set and reused for
    every right-hand side (one per latent component and time).
    """

    def __init__(self, params: np.ndarray, *, cond_limit: float = 1e14):
        pts = np.asarray(params, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 2:
            raise InsufficientData("at least two training parameters are required")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InvalidArgument("training parameters must be distinct")
        self.points = pts
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        self.kernel = dist**5
        cond = np.linalg.cond(self.kernel)
        if not np.isfinite(cond) or cond > cond_limit:
            raise ConditioningError(
                f"quintic kernel matrix is too ill-conditioned (cond ~ {cond:.3e})",
                condition_number=float(cond),
            )
        self.condition_number = float(cond)
        self._factor = lu_factor(self.kernel)

    def weights(self, values: np.ndarray) -> np.ndarray:
        """Solve for the kernel weights of one or more value rows
        (latent_dim, n_params)."""
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if values.shape[1] != self.points.shape[0]:
            raise InvalidArgument("one value per training parameter is required")
        return lu_solve(self._factor, values.T).T

    def interpolate(self, values: np.ndarray, mu_new) -> np.ndarray:
        mu = np.asarray(mu_new, dtype=np.float64).reshape(-1)
        if mu.size != self.points.shape[1]:
            raise InvalidArgument(
                f"parameter has dimension {mu.size}, expected {self.points.shape[1]}"
            )
        w = self.weights(values)
        phi = np.linalg.norm(mu[None, :] - self.points, axis=1) ** 5
        return w @ phi


def interpolate_rbf(coords: np.ndarray, params: np.ndarray, mu_new) -> np.ndarray:
    """One-shot quintic RBF interpolation of latent coordinates."""
    return RbfInterpolator(params).interpolate(coords, mu_new)


def _coords_at_time(bundle: RomBundle, interval: int, local_index: int) -> np.ndarray:
    m = bundle.maps[interval]
    n_local = m.time_range[1] - m.time_range[0]
    n_p = bundle.params.shape[0]
    cols = local_index + n_local * np.arange(n_p)
    return m.coords[:, cols]


def _reconstruct(bundle: RomBundle, interval: int, local_index: int, c: np.ndarray) -> np.ndarray:
    m = bundle.maps[interval]
    if m.kind == "pod":
        if m.latent_dim == 0:
            return bundle.mean_offset.copy()
        return bundle.mean_offset + m.basis.basis @ c
    scaled = m.model.decode(c)
    state = m.constants.denormalize(scaled, local_index)
    return state.reshape(-1)


def predict(
    bundle: RomBundle,
    t_test: float,
    mu_test,
    *,
    quad: AngularQuadrature | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Full-order prediction at one (time, parameter) pair.

    ``t_test`` must be one of the training sample times; predicting off the
    training grid in time is rejected.  Returns the state vector and, when
    a quadrature is supplied, the velocity-averaged density.
    """
    interval = bundle.interval_of_time(t_test)
    i0, _ = bundle.maps[interval].time_range
    times = bundle.partition.times
    global_idx = int(np.flatnonzero(np.isclose(times, t_test, rtol=1e-12, atol=1e-12))[0])
    local = global_idx - i0
    knots = _coords_at_time(bundle, interval, local)
    if bundle.params.ndim == 1:
        c = interpolate_1d(knots, bundle.params, float(np.asarray(mu_test).reshape(())))
    else:
        c = interpolate_rbf(knots, bundle.params, mu_test)
    f = _reconstruct(bundle, interval, local, c)
    rho = None
    if quad is not None:
        rho = quad.average(f.reshape(quad.n_velocities, -1))
    return f, rho


@dataclass
class PredictionReport:
    """Per-case relative errors with aggregates and online timing."""

    rows: list = field(default_factory=list)
    method: str = ""
    notes: dict = field(default_factory=dict)

    def add(self, **kwargs):
        self.rows.append(kwargs)

    @property
    def scored(self) -> list:
        return [r for r in self.rows if not r["skipped"]]

    @property
    def e_f_mean(self) -> float:
        vals = [r["e_f"] for r in self.scored]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def e_rho_mean(self) -> float:
        vals = [r["e_rho"] for r in self.scored if r["e_rho"] is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def interval_summary(self, bundle: RomBundle) -> list:
        out = []
        edges = bundle.partition.boundaries()
        for j, m in enumerate(bundle.maps):
            cases = [r for r in self.rows if r["interval"] == j]
            out.append(
                {
                    "interval": j,
                    "t_start": float(edges[j]),
                    "t_end": float(edges[j + 1]),
                    "kind": m.kind,
                    "latent_dim": m.latent_dim,
                    "n_cases": len(cases),
                    "mean_online_us": float(np.mean([r["online_us"] for r in cases]))
                    if cases
                    else float("nan"),
                    "total_online_s": float(sum(r["online_us"] for r in cases) * 1e-6),
                    "e_f_mean": float(np.mean([r["e_f"] for r in cases if not r["skipped"]]))
                    if any(not r["skipped"] for r in cases)
                    else float("nan"),
                }
            )
        return out

    def write_rows_csv(self, path):
        fields = [
            "t_test",
            "mu_test",
            "interval",
            "e_f",
            "e_rho",
            "online_us",
            "out_of_hull",
            "skipped",
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: r.get(k) for k in fields})

    def write_summary_csv(self, path, bundle: RomBundle):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["E_f", self.e_f_mean])
            writer.writerow(["E_rho", self.e_rho_mean])
            writer.writerow(["n_cases", len(self.scored)])
            writer.writerow([])
            writer.writerow(
                [
                    "interval",
                    "t_start",
                    "t_end",
                    "kind",
                    "latent_dim",
                    "n_cases",
                    "mean_online_us",
                    "total_online_s",
                    "e_f_mean",
                ]
            )
            for row in self.interval_summary(bundle):
                writer.writerow([row[k] for k in (
                    "interval", "t_start", "t_end", "kind", "latent_dim",
                    "n_cases", "mean_online_us", "total_online_s", "e_f_mean",
                )])


def evaluate(
    bundle: RomBundle,
    references: np.ndarray,
    test_times: np.ndarray,
    test_params: np.ndarray,
    *,
    quad: AngularQuadrature | None = None,
) -> PredictionReport:
    """Score predictions against full-order references.

    ``references`` has shape (n_test_params, n_test_times, n_dofs).  Cases
    with a zero-norm reference are skipped and flagged rather than scored.
    Online time per case covers interpolation and reconstruction only.
    """
    references = np.asarray(references, dtype=np.float64)
    test_times = np.asarray(test_times, dtype=np.float64)
    test_params = np.asarray(test_params, dtype=np.float64)
    n_p = test_params.shape[0]
    n_t = test_times.size
    if references.shape[:2] != (n_p, n_t):
        raise InvalidArgument(
            f"references must be (n_test_params, n_test_times, n_h), got {references.shape}"
        )
    if bundle.params.ndim == 1:
        lo, hi = bundle.params.min(), bundle.params.max()
    report = PredictionReport(method=bundle.method)
    for ip in range(n_p):
        mu = test_params[ip] if test_params.ndim > 1 else float(test_params[ip])
        for it in range(n_t):
            t = float(test_times[it])
            start = time.perf_counter()
            f, rho = predict(bundle, t, mu, quad=quad)
            online_us = (time.perf_counter() - start) * 1e6
            interval = bundle.interval_of_time(t)
            ref = references[ip, it]
            ref_norm = np.linalg.norm(ref)
            out_of_hull = bool(bundle.params.ndim == 1 and (mu < lo or mu > hi))
            if ref_norm == 0.0:
                report.add(
                    t_test=t, mu_test=mu, interval=interval, e_f=None, e_rho=None,
                    online_us=online_us, out_of_hull=out_of_hull, skipped=True,
                )
                continue
            e_f = float(np.linalg.norm(f - ref) / ref_norm)
            e_rho = None
            if quad is not None:
                ref_rho = quad.average(ref.reshape(quad.n_velocities, -1))
                denom = np.linalg.norm(ref_rho)
                if denom > 0:
                    e_rho = float(np.linalg.norm(rho - ref_rho) / denom)
            report.add(
                t_test=t, mu_test=mu, interval=interval, e_f=e_f, e_rho=e_rho,
                online_us=online_us, out_of_hull=out_of_hull, skipped=False,
            )
    return report
