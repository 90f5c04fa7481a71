"""Snapshot matrix assembly, slicing, and binary persistence.

Columns are centered full-order states ordered parameter-major and
time-minor: all sample times of the first training parameter, then the
second, and so on.  The stored mean offset is the arithmetic mean of the
raw states over the whole training set, shared by every time slice.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptySliceError,
    FormatError,
    InvalidArgument,
    NumericalFailure,
    UnsupportedVersion,
)
from .fom import ProblemSpec, run

__all__ = ["SnapshotMatrix", "generate", "slice_time_interval", "save", "load"]

_MAGIC = b"KROM"
_VERSION = 1


@dataclass(frozen=True)
class SnapshotMatrix:
    """Centered snapshot columns with their time/parameter index.

    ``data[:, (j * n_t) + i]`` holds ``f_h(times[i]; params[j]) - mean_offset``.
    """

    data: np.ndarray
    times: np.ndarray
    params: np.ndarray
    mean_offset: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        params = np.asarray(self.params, dtype=np.float64)
        mean = np.asarray(self.mean_offset, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidArgument("snapshot data must be 2D")
        if times.ndim != 1 or params.ndim not in (1, 2):
            raise InvalidArgument("times must be 1D; params must be 1D or 2D")
        n_cols = times.size * (params.shape[0] if params.size else 0)
        if data.shape[1] != n_cols:
            raise InvalidArgument(
                f"data has {data.shape[1]} columns, expected n_t*n_p = {n_cols}"
            )
        if mean.shape != (data.shape[0],):
            raise InvalidArgument("mean offset length must match the state dimension")
        for arr in (data, times, params, mean):
            arr.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "mean_offset", mean)

    @property
    def n_dofs(self) -> int:
        return self.data.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    @property
    def param_dim(self) -> int:
        return 1 if self.params.ndim == 1 else self.params.shape[1]

    def column_index(self, time_index: int, param_index: int) -> int:
        return param_index * self.n_times + time_index

    def columns_for_time_range(self, i0: int, i1: int) -> np.ndarray:
        """Global column indices of sample-time indices [i0, i1) for all params."""
        if not (0 <= i0 < i1 <= self.n_times):
            raise InvalidArgument(f"bad time index range [{i0}, {i1})")
        base = np.arange(i0, i1)
        return (np.arange(self.n_params)[:, None] * self.n_times + base[None, :]).ravel()

    def slice_by_time_indices(self, i0: int, i1: int) -> "SnapshotMatrix":
        """Sub-matrix over sample-time indices [i0, i1), keeping the global mean."""
        cols = self.columns_for_time_range(i0, i1)
        data = np.ascontiguousarray(self.data[:, cols])
        return SnapshotMatrix(data, self.times[i0:i1], self.params, self.mean_offset, dict(self.meta))

    def raw_column(self, time_index: int, param_index: int) -> np.ndarray:
        """Uncentered state for one (time, parameter) pair."""
        return self.data[:, self.column_index(time_index, param_index)] + self.mean_offset


def generate(
    spec: ProblemSpec,
    training_params: Sequence,
    sample_times: Sequence[float],
    *,
    method: str = "backward-euler",
    threads: int = 1,
    meta: dict | None = None,
) -> SnapshotMatrix:
    """Run the full-order model per parameter and stack centered columns."""
    params = list(training_params)
    times = [float(t) for t in sample_times]
    if not params or not times:
        raise InvalidArgument("training parameters and sample times must be nonempty")
    for t in times:
        spec.grid_index(t)

    n_t, n_p = len(times), len(params)
    data = np.empty((spec.n_dofs, n_t * n_p))

    def fill(j: int):
        try:
            states = run(spec, params[j], times, method=method)
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"snapshot generation failed for parameter index {j} "
                f"(mu={params[j]}): {exc}",
                residual=exc.residual,
                iteration=exc.iteration,
            ) from exc
        for i, state in enumerate(states):
            data[:, j * n_t + i] = state.values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(n_p)))
    else:
        for j in range(n_p):
            fill(j)

    mean = data.mean(axis=1)
    data -= mean[:, None]
    return SnapshotMatrix(data, np.array(times), np.array(params), mean, meta or {})


def slice_time_interval(s: SnapshotMatrix, interval: tuple[float, float]) -> SnapshotMatrix:
    """Columns whose sample time lies in the half-open range (a, b]."""
    a, b = interval
    mask = (s.times > a) & (s.times <= b)
    if not mask.any():
        raise EmptySliceError(f"no sample times in ({a}, {b}]")
    idx = np.flatnonzero(mask)
    if not (np.diff(idx) == 1).all():
        raise InvalidArgument("sample times selected by the interval are not contiguous")
    return s.slice_by_time_indices(int(idx[0]), int(idx[-1]) + 1)


def save(s: SnapshotMatrix, path) -> None:
    """Write the binary snapshot file (little-endian, column-major payload)."""
    meta = {
        "times": s.times.tolist(),
        "params": s.params.tolist(),
        "column_order": "parameter-major-time-minor",
        "dof_ordering": "velocity-major-element-nodal",
        "extra": s.meta,
    }
    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQQ", s.n_dofs, s.n_snapshots, len(blob)))
        fh.write(blob)
        fh.write(s.mean_offset.astype("<f8").tobytes())
        fh.write(np.asfortranarray(s.data).tobytes(order="F"))


def load(path) -> SnapshotMatrix:
    """Read a snapshot file written by :func:`save`."""
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != _MAGIC:
        raise FormatError(f"bad magic {payload[:4]!r}, expected {_MAGIC!r}", offset=0)
    (version,) = struct.unpack_from("<I", payload, 4)
    if version != _VERSION:
        raise UnsupportedVersion(f"snapshot format version {version} not supported", offset=4)
    n_h, n_s, meta_len = struct.unpack_from("<QQQ", payload, 8)
    off = 32
    try:
        meta = json.loads(payload[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata block: {exc}", offset=off) from exc
    off += meta_len
    need = off + 8 * n_h * (1 + n_s)
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: have {len(payload)} bytes, need {need}", offset=len(payload)
        )
    mean = np.frombuffer(payload, dtype="<f8", count=n_h, offset=off).copy()
    off += 8 * n_h
    flat = np.frombuffer(payload, dtype="<f8", count=n_h * n_s, offset=off)
    data = flat.reshape((n_h, n_s), order="F").copy()
    return SnapshotMatrix(
        data,
        np.array(meta["times"]),
        np.array(meta["params"]),
        mean,
        meta.get("extra", {}),
    )
