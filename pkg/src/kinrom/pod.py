"""Reduced bases from singular value decompositions of snapshot slices.

Two truncation rules are supported: ``spectral`` keeps the smallest rank r
with sigma_{r+1}/sigma_1 <= tol, and ``energy`` keeps the smallest rank
whose retained squared singular values reach a (1 - tol^2) fraction of the
total.  Under the energy rule the relative Frobenius reconstruction error
of each slice is at most tol, and the same bound carries over to any
column partition of the full matrix, which ``verify_partition_bound``
checks directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, NumericalFailure

__all__ = [
    "PodBasis",
    "singular_values",
    "build_pod",
    "rank_for_tolerance",
    "project",
    "reconstruct",
    "verify_partition_bound",
]

RULES = ("energy", "spectral")

# Wide slices switch to the Gram route: the eigendecomposition of S S^T
# costs O(n_h^2 (n_h + n_cols)) instead of the O(n_h n_cols^2) direct SVD.
_GRAM_ASPECT = 4


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal reduced basis with its full singular spectrum."""

    basis: np.ndarray
    singular_values: np.ndarray
    rank: int
    rule: str
    tolerance: float

    def __post_init__(self):
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        sv = np.asarray(self.singular_values, dtype=np.float64)
        basis.setflags(write=False)
        sv.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "singular_values", sv)

    @property
    def n_dofs(self) -> int:
        return self.basis.shape[0]


def _spectrum(s: np.ndarray, want_vectors: bool):
    """Singular values (descending) and optionally left singular vectors."""
    n_h, n_cols = s.shape
    if n_cols > _GRAM_ASPECT * n_h:
        gram = s @ s.T
        if want_vectors:
            lam, vec = np.linalg.eigh(gram)
            lam, vec = lam[::-1], vec[:, ::-1]
            return np.sqrt(np.clip(lam, 0.0, None)), vec
        lam = np.linalg.eigvalsh(gram)[::-1]
        return np.sqrt(np.clip(lam, 0.0, None)), None
    if want_vectors:
        u, sv, _ = np.linalg.svd(s, full_matrices=False)
        return sv, u
    return np.linalg.svd(s, compute_uv=False), None


def singular_values(s: np.ndarray) -> np.ndarray:
    """Full singular spectrum of a slice, descending."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise InvalidArgument("matrix must be 2D and nonempty")
    sv, _ = _spectrum(s, want_vectors=False)
    return sv


def rank_for_tolerance(sv: np.ndarray, tol: float, rule: str) -> int:
    """Minimum rank satisfying the chosen truncation rule."""
    if not (0.0 < tol < 1.0):
        raise InvalidArgument(f"tolerance must lie in (0, 1), got {tol}")
    if rule not in RULES:
        raise InvalidArgument(f"unknown truncation rule {rule!r}")
    sv = np.asarray(sv, dtype=np.float64)
    n = sv.size
    if n == 0 or sv[0] == 0.0:
        return 0
    if rule == "spectral":
        # sigma_{r+1} / sigma_1 <= tol; fall back to the full rank when no
        # smaller r satisfies it.
        ok = np.flatnonzero(sv[1:] / sv[0] <= tol)
        return int(ok[0]) + 1 if ok.size else n
    energy = np.cumsum(sv**2)
    target = (1.0 - tol * tol) * energy[-1]
    return int(np.searchsorted(energy, target)) + 1


def build_pod(s: np.ndarray, tol: float, rule: str = "energy") -> PodBasis:
    """Reduced basis of a (centered) snapshot slice.

    An all-zero slice yields a legal rank-0 basis that reconstructs to the
    mean offset alone.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise InvalidArgument("snapshot slice must be 2D and nonempty")
    if not (0.0 < tol < 1.0):
        raise InvalidArgument(f"tolerance must lie in (0, 1), got {tol}")
    if rule not in RULES:
        raise InvalidArgument(f"unknown truncation rule {rule!r}")
    if not s.any():
        empty = np.zeros((s.shape[0], 0))
        return PodBasis(empty, np.zeros(min(s.shape)), 0, rule, tol)
    sv, u = _spectrum(s, want_vectors=True)
    r = rank_for_tolerance(sv, tol, rule)
    return PodBasis(u[:, :r], sv, r, rule, tol)


def project(basis: PodBasis, column: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Latent coordinates c = U^T (column - mean); accepts column batches."""
    column = np.asarray(column, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if column.shape[0] != basis.n_dofs or mean.shape != (basis.n_dofs,):
        raise InvalidArgument("column/mean dimensions do not match the basis")
    centered = column - (mean[:, None] if column.ndim == 2 else mean)
    return basis.basis.T @ centered


def reconstruct(basis: PodBasis, coords: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Full-order reconstruction mean + U c; accepts coordinate batches."""
    coords = np.asarray(coords, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (basis.n_dofs,):
        raise InvalidArgument("mean length does not match the basis")
    if coords.shape[0] != basis.rank:
        raise InvalidArgument(
            f"coordinates have {coords.shape[0]} rows, basis rank is {basis.rank}"
        )
    lifted = basis.basis @ coords
    return lifted + (mean[:, None] if lifted.ndim == 2 else mean)


def verify_partition_bound(
    s: np.ndarray,
    slices: Sequence[np.ndarray],
    bases: Sequence[PodBasis],
) -> float:
    """Relative Frobenius error of slice-wise reconstruction of ``s``.

    ``slices`` are column index sets that must partition the columns.  The
    global error can never exceed the worst per-slice relative error, and
    under the energy rule it is additionally checked against the worst
    slice tolerance.
    """
    s = np.asarray(s, dtype=np.float64)
    if len(slices) != len(bases):
        raise InvalidArgument("need one basis per slice")
    cat = np.sort(np.concatenate([np.asarray(ix, dtype=np.intp) for ix in slices]))
    if cat.size != s.shape[1] or not np.array_equal(cat, np.arange(s.shape[1])):
        raise InvalidArgument("slices do not partition the matrix columns")

    total = np.linalg.norm(s) ** 2
    if total == 0.0:
        return 0.0
    err_sq = 0.0
    worst_slice_rel = 0.0
    for ix, basis in zip(slices, bases):
        block = s[:, np.asarray(ix, dtype=np.intp)]
        resid = block - basis.basis @ (basis.basis.T @ block)
        e2 = np.linalg.norm(resid) ** 2
        err_sq += e2
        b2 = np.linalg.norm(block) ** 2
        if b2 > 0.0:
            worst_slice_rel = max(worst_slice_rel, np.sqrt(e2 / b2))

    rel = float(np.sqrt(err_sq / total))
    if rel > worst_slice_rel * (1.0 + 1e-12) + 1e-15:
        raise NumericalFailure(
            f"partitioned reconstruction error {rel:.3e} exceeds the worst "
            f"slice error {worst_slice_rel:.3e}"
        )
    if all(b.rule == "energy" for b in bases) and bases:
        tol = max(b.tolerance for b in bases)
        if rel > tol * (1.0 + 1e-10):
            raise NumericalFailure(
                f"partitioned reconstruction error {rel:.3e} exceeds the "
                f"energy tolerance {tol:.3e}"
            )
    return rel
