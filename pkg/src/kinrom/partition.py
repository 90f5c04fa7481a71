"""Time-domain partitioning: uniform splits and goal-oriented adaptation.

A partition is stored as sample-index boundaries into the global list of
snapshot times, so splits and merges are exact integer operations and the
half-open intervals (a_j, b_j] always stay aligned with the sampling grid.

The adaptive pass walks the intervals of the previous partition once per
sweep, using only pre-sweep ranks for every decision: intervals whose rank
exceeds ``r_max`` are split in two; maximal runs of intervals with rank
below ``r_min`` are merged into their successor (into the successor's
first half when that successor is itself split this sweep), a run that
reaches the final interval is merged into one, and a lone low-rank final
interval is folded backward into its predecessor.  Equilibrium detection
drops that last backward fold and exempts the final interval from the
stopping test so a near-steady tail may keep an ultra-low rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .pod import RULES, rank_for_tolerance, singular_values
from .snapshots import SnapshotMatrix

__all__ = [
    "TimePartition",
    "AdaptiveConfig",
    "RankOracle",
    "uniform_partition",
    "coarsen_refine_sweep",
    "adapt",
    "ranks_for",
]

_GRID_RTOL = 1e-9

# An interval is refinable only when both halves keep at least two sample
# times; smaller intervals are frozen and flagged instead of split.
MIN_REFINE_SAMPLES = 4


@dataclass(frozen=True)
class TimePartition:
    """Ordered half-open intervals (a_j, b_j] covering (0, T].

    ``bounds`` holds k+1 strictly increasing sample-index boundaries with
    ``bounds[0] == 0`` and ``bounds[-1] == len(times)``; interval j owns the
    sample times with indices [bounds[j], bounds[j+1]).
    """

    times: np.ndarray
    bounds: tuple[int, ...]
    ranks: tuple[int, ...] | None = None
    iterations: int = 0
    converged: bool = True
    frozen: tuple[int, ...] = ()
    ae_intervals: tuple[int, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        b = tuple(int(x) for x in self.bounds)
        if len(b) < 2 or b[0] != 0 or b[-1] != times.size:
            raise InvalidArgument(f"bad partition bounds {b} for {times.size} sample times")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise InvalidArgument("every interval must contain at least one sample time")
        object.__setattr__(self, "bounds", b)
        if self.ranks is not None:
            object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))

    @property
    def n_intervals(self) -> int:
        return len(self.bounds) - 1

    def index_ranges(self) -> list[tuple[int, int]]:
        return [(self.bounds[j], self.bounds[j + 1]) for j in range(self.n_intervals)]

    def boundaries(self) -> np.ndarray:
        """Interval edges in time units: [0, b_1, ..., b_k]."""
        edges = np.empty(self.n_intervals + 1)
        edges[0] = 0.0
        for j in range(1, self.n_intervals + 1):
            edges[j] = self.times[self.bounds[j] - 1]
        return edges

    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries())

    def interval_of_index(self, time_index: int) -> int:
        if not (0 <= time_index < self.times.size):
            raise InvalidArgument(f"time index {time_index} out of range")
        return int(np.searchsorted(np.array(self.bounds), time_index, side="right")) - 1

    def sample_counts(self) -> np.ndarray:
        return np.diff(np.array(self.bounds))


@dataclass(frozen=True)
class AdaptiveConfig:
    """Thresholds and budget for the adaptive refine/coarsen loop."""

    r_max: int
    r_min: int
    n_iter: int = 20
    pod_tol: float = 1e-4
    rule: str = "energy"
    equilibrium_detection: bool = True

    def __post_init__(self):
        if self.r_min < 0 or self.r_max < 1 or self.r_min > self.r_max / 2:
            raise InvalidArgument(
                f"need 0 <= r_min <= r_max/2, got r_min={self.r_min}, r_max={self.r_max}"
            )
        if self.n_iter < 1:
            raise InvalidArgument("n_iter must be at least 1")
        if self.rule not in RULES:
            raise InvalidArgument(f"unknown truncation rule {self.rule!r}")
        if not (0.0 < self.pod_tol < 1.0):
            raise InvalidArgument("pod_tol must lie in (0, 1)")


def uniform_partition(final_time: float, k: int, times: Sequence[float]) -> TimePartition:
    """k equal-width intervals of (0, final_time], snapped to sample indices."""
    times = np.asarray(times, dtype=np.float64)
    if k < 1:
        raise InvalidArgument("interval count must be at least 1")
    if times.ndim != 1 or times.size == 0 or (np.diff(times) <= 0).any():
        raise InvalidArgument("sample times must be nonempty and strictly increasing")
    if times[0] <= 0 or times[-1] > final_time * (1 + _GRID_RTOL):
        raise InvalidArgument("sample times must lie in (0, final_time]")
    bounds = [0]
    for i in range(1, k + 1):
        edge = final_time * i / k
        idx = int(np.searchsorted(times, edge * (1.0 + _GRID_RTOL)))
        bounds.append(idx)
    bounds[-1] = times.size
    if any(bounds[i] >= bounds[i + 1] for i in range(k)):
        raise InvalidArgument(
            f"{k} uniform intervals leave at least one interval without sample times"
        )
    return TimePartition(times, tuple(bounds))


def _split_indices(i0: int, i1: int) -> tuple[int, int, int]:
    """Even split of the sample-index range; the left half takes the extra
    sample when the count is odd.  Returns (i0, mid, i1)."""
    mid = i0 + (i1 - i0 + 1) // 2
    return i0, mid, i1


def _width(times: np.ndarray, i0: int, i1: int) -> float:
    left = 0.0 if i0 == 0 else times[i0 - 1]
    return float(times[i1 - 1] - left)


def coarsen_refine_sweep(
    partition: TimePartition,
    ranks: Sequence[int],
    cfg: AdaptiveConfig,
    *,
    tau_min: float | None = None,
) -> TimePartition:
    """One refine/coarsen pass driven entirely by pre-sweep ranks.

    With ``tau_min`` set, an interval whose rank exceeds ``r_max`` but whose
    halves would be narrower than ``tau_min`` is marked for a nonlinear
    (autoencoder) map instead of being split.
    """
    old = partition.index_ranges()
    k_old = len(old)
    ranks = [int(r) for r in ranks]
    if len(ranks) != k_old:
        raise InvalidArgument(f"need {k_old} ranks, got {len(ranks)}")
    times = partition.times

    def wants_ae(j: int) -> bool:
        if tau_min is None or ranks[j] <= cfg.r_max:
            return False
        return _width(times, *old[j]) / 2.0 < tau_min

    def splittable(j: int) -> bool:
        i0, i1 = old[j]
        return i1 - i0 >= MIN_REFINE_SAMPLES

    new: list[tuple[int, int]] = []
    ae_flags: list[bool] = []
    frozen_flags: list[bool] = []

    def emit(rng, ae=False, frozen=False):
        new.append(rng)
        ae_flags.append(ae)
        frozen_flags.append(frozen)

    j = 0
    while j < k_old:
        i0, i1 = old[j]
        r = ranks[j]
        if r > cfg.r_max:
            if wants_ae(j):
                emit((i0, i1), ae=True)
            elif splittable(j):
                a0, mid, a1 = _split_indices(i0, i1)
                emit((a0, mid))
                emit((mid, a1))
            else:
                emit((i0, i1), frozen=True)
            j += 1
        elif r < cfg.r_min:
            dj = 0
            while j + dj + 1 < k_old and ranks[j + dj + 1] < cfg.r_min:
                dj += 1
            if j + dj + 1 <= k_old - 1:
                # Run is followed by an interval with rank >= r_min: absorb
                # the run into it, or into its first half if it splits now.
                succ = j + dj + 1
                s0, s1 = old[succ]
                if ranks[succ] > cfg.r_max and not wants_ae(succ) and splittable(succ):
                    b0, mid, b1 = _split_indices(s0, s1)
                    emit((i0, mid))
                    emit((mid, b1))
                else:
                    emit((i0, s1), ae=wants_ae(succ))
                j = succ + 1
            elif dj > 0:
                # Run reaches the final interval: collapse it into one.
                emit((i0, old[j + dj][1]))
                j = j + dj + 1
            else:
                # Lone low-rank final interval: fold backward, unless the
                # equilibrium tail is being preserved or nothing precedes it.
                if cfg.equilibrium_detection or not new:
                    emit((i0, i1))
                else:
                    p0, _ = new.pop()
                    ae_flags.pop()
                    frozen_flags.pop()
                    emit((p0, i1))
                j += 1
        else:
            emit((i0, i1))
            j += 1

    bounds = [0] + [rng[1] for rng in new]
    return TimePartition(
        times,
        tuple(bounds),
        ranks=None,
        iterations=partition.iterations + 1,
        converged=False,
        frozen=tuple(i for i, f in enumerate(frozen_flags) if f),
        ae_intervals=tuple(i for i, a in enumerate(ae_flags) if a),
    )


class RankOracle:
    """Per-interval rank provider with caching keyed by index ranges.

    Identical slices recur between sweeps and between runs started from
    different initial partitions, and the singular spectrum is by far the
    dominant cost, so spectra are memoized on (start, end).
    """

    def __init__(self, s: SnapshotMatrix, tol: float, rule: str = "energy"):
        if not (0.0 < tol < 1.0):
            raise InvalidArgument("tolerance must lie in (0, 1)")
        if rule not in RULES:
            raise InvalidArgument(f"unknown truncation rule {rule!r}")
        self.snapshots = s
        self.tol = tol
        self.rule = rule
        self._spectra: dict[tuple[int, int], np.ndarray] = {}

    def spectrum(self, i0: int, i1: int) -> np.ndarray:
        key = (int(i0), int(i1))
        if key not in self._spectra:
            cols = self.snapshots.columns_for_time_range(*key)
            block = self.snapshots.data[:, cols]
            if not block.any():
                self._spectra[key] = np.zeros(min(block.shape))
            else:
                self._spectra[key] = singular_values(block)
        return self._spectra[key]

    def rank(self, i0: int, i1: int) -> int:
        return rank_for_tolerance(self.spectrum(i0, i1), self.tol, self.rule)

    def ranks(self, partition: TimePartition) -> list[int]:
        return [self.rank(i0, i1) for i0, i1 in partition.index_ranges()]


def ranks_for(
    s: SnapshotMatrix,
    partition: TimePartition,
    tol: float,
    rule: str = "energy",
    *,
    oracle: RankOracle | None = None,
) -> list[int]:
    """Per-interval ranks under the truncation tolerance."""
    if oracle is None:
        oracle = RankOracle(s, tol, rule)
    return oracle.ranks(partition)


def _goal_met(ranks: Sequence[int], cfg: AdaptiveConfig) -> bool:
    # Equilibrium detection exempts the final interval from the lower rank
    # bound only: its rank may sink arbitrarily low near steady state, but
    # an over-rich tail must still be refined.
    for j, r in enumerate(ranks):
        if r > cfg.r_max:
            return False
        tail = j == len(ranks) - 1
        if r < cfg.r_min and not (cfg.equilibrium_detection and tail):
            return False
    return True


def adapt(
    s: SnapshotMatrix,
    initial: TimePartition,
    cfg: AdaptiveConfig,
    *,
    oracle: RankOracle | None = None,
    history: list | None = None,
) -> TimePartition:
    """Iterate refine/coarsen sweeps until ranks land in [r_min, r_max].

    Stops early when the goal holds or a sweep leaves the partition
    unchanged (only possible through frozen intervals); in the latter case
    the result is flagged as not converged.
    """
    if oracle is None:
        oracle = RankOracle(s, cfg.pod_tol, cfg.rule)
    part = initial
    ranks = oracle.ranks(part)
    if history is not None:
        history.append({"bounds": part.bounds, "ranks": list(ranks)})
    iterations = 0
    frozen: tuple[int, ...] = ()
    while iterations < cfg.n_iter and not _goal_met(ranks, cfg):
        swept = coarsen_refine_sweep(part, ranks, cfg)
        iterations += 1
        if swept.bounds == part.bounds:
            frozen = swept.frozen
            break
        part = swept
        frozen = swept.frozen
        ranks = oracle.ranks(part)
        if history is not None:
            history.append({"bounds": part.bounds, "ranks": list(ranks)})
    return TimePartition(
        part.times,
        part.bounds,
        ranks=tuple(ranks),
        iterations=iterations,
        converged=_goal_met(ranks, cfg),
        frozen=frozen,
    )
