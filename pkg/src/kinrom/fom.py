"""Implicit full-order solver for the discrete-velocity transport system.

Each implicit step solves a block system whose per-velocity part is
triangular in the element ordering.  The scattering coupling is resolved by
a lagged fixed-point iteration: hold the velocity-averaged density from the
previous iterate, solve every velocity by a single substitution sweep, then
re-average.  The iteration contracts with factor dt*sigma_s/(alpha +
dt*sigma_t) and is terminated on the relative residual of the full coupled
system, which is available in closed form from the density update.

Dof ordering is frozen: velocity-major blocks, each block in spatial nodal
order (element-major, left node then right node).  Snapshot files and the
autoencoder channel layout both rely on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numba
import numpy as np

from .discretization import (
    AngularQuadrature,
    CrossSections,
    DgOperators,
    Mesh1D,
    assemble_dg,
    build_mesh,
    gauss_legendre,
)
from .errors import InvalidArgument, NumericalFailure

__all__ = [
    "ProblemSpec",
    "FomState",
    "step_backward_euler",
    "step_bdf2",
    "run",
    "compute_rho",
]

_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one parametric transport problem.

    Cross sections and boundary inflows may depend on the parameter ``mu``;
    inflow values may additionally depend on time and are evaluated at the
    implicit time level of each step.  The volumetric source is isotropic
    and time-independent.
    """

    domain: tuple[float, float]
    n_elements: int
    n_velocities: int
    sigma_s: Callable[[float, float], float]  # (x, mu)
    sigma_a: Callable[[float, float], float]  # (x, mu)
    source: Callable[[float], float]  # G(x)
    inflow_left: Callable[[float, float], float]  # (t, mu), used for v > 0
    inflow_right: Callable[[float, float], float]  # (t, mu), used for v < 0
    initial: Callable[[float, float], float]  # f0(x, v)
    final_time: float
    dt: float
    param_dim: int = 1
    param_ranges: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not (self.final_time > 0 and self.dt > 0):
            raise InvalidArgument("final_time and dt must be positive")
        steps = self.final_time / self.dt
        if abs(steps - round(steps)) > _GRID_RTOL * max(1.0, steps):
            raise InvalidArgument(
                f"final_time/dt = {steps} is not an integer number of steps"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    @property
    def n_x(self) -> int:
        return 2 * self.n_elements

    @property
    def n_dofs(self) -> int:
        return self.n_x * self.n_velocities

    def time_grid(self) -> np.ndarray:
        """All grid times k*dt for k = 0..n_steps."""
        return np.arange(self.n_steps + 1) * self.dt

    def grid_index(self, t: float) -> int:
        """Map a time to its grid step index, rejecting off-grid values."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > _GRID_RTOL * (1.0 + abs(t)):
            raise InvalidArgument(f"time {t} is not on the grid with dt={self.dt}")
        return k

    def discretize(self, mu) -> DgOperators:
        """Assemble the DG operators for one parameter value."""
        mesh = build_mesh(self.domain, self.n_elements)
        quad = gauss_legendre(self.n_velocities)
        xs = CrossSections.from_functions(
            mesh,
            lambda x: self.sigma_s(x, mu),
            lambda x: self.sigma_a(x, mu),
        )
        return assemble_dg(mesh, quad, xs)

    def initial_state(self, ops: DgOperators) -> "FomState":
        coords = ops.mesh.node_coordinates
        f0 = np.empty((ops.quad.n_velocities, ops.mesh.n_dofs))
        for j, v in enumerate(ops.quad.nodes):
            f0[j] = [self.initial(x, v) for x in coords]
        return FomState(f0.reshape(-1), 0.0)

    def source_vector(self, ops: DgOperators) -> np.ndarray:
        """Isotropic source broadcast to the full velocity-major layout."""
        g = np.array([float(self.source(x)) for x in ops.mesh.node_coordinates])
        return np.tile(g, ops.quad.n_velocities)


@dataclass(frozen=True)
class FomState:
    """Full-order dof vector (velocity-major) at one time."""

    values: np.ndarray
    time: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidArgument("state values must be a flat vector")
        if not np.isfinite(values).all():
            raise InvalidArgument("state values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_dofs(self) -> int:
        return self.values.size


def compute_rho(state: FomState, quad: AngularQuadrature) -> np.ndarray:
    """Velocity-averaged density: rho_i = sum_j w_j f[j, i]."""
    n_v = quad.n_velocities
    if state.n_dofs % n_v:
        raise InvalidArgument(
            f"state size {state.n_dofs} is not a multiple of {n_v} velocities"
        )
    return quad.average(state.values.reshape(n_v, -1))


@numba.njit(cache=True, nogil=True)
def _implicit_solve(base, dinv, mass, dt_sig_s, weights, vels, dt, rho0, tol, max_iters):
    """Source-iteration solve of one implicit step, all velocities.

    ``base`` is the fixed mass-weighted right-hand side (previous-state
    combo, volumetric source, and boundary injections already included).
    Returns the new state (velocity-major 2D), the density at convergence,
    the iteration count, and the residual history relative to ||base||.
    """
    n_v, n_x = base.shape
    n_el = n_x // 2

    bnorm2 = 0.0
    for j in range(n_v):
        for i in range(n_x):
            bnorm2 += base[j, i] * base[j, i]
    bnorm = np.sqrt(bnorm2)

    rho = rho0.copy()
    srho = np.empty(n_x)
    f = np.empty((n_v, n_x))
    res_hist = np.empty(max_iters)
    k = 0
    while k < max_iters:
        # Lagged scattering contribution dt*sigma_s*(M @ rho) per element.
        for e in range(n_el):
            r0 = rho[2 * e]
            r1 = rho[2 * e + 1]
            c = dt_sig_s[e]
            srho[2 * e] = c * (mass[0, 0] * r0 + mass[0, 1] * r1)
            srho[2 * e + 1] = c * (mass[1, 0] * r0 + mass[1, 1] * r1)

        for j in range(n_v):
            v = vels[j]
            if v > 0.0:
                fin = 0.0
                first = True
                for e in range(n_el):
                    b0 = base[j, 2 * e] + srho[2 * e]
                    b1 = base[j, 2 * e + 1] + srho[2 * e + 1]
                    if not first:
                        b0 += dt * v * fin
                    f[j, 2 * e] = dinv[j, e, 0, 0] * b0 + dinv[j, e, 0, 1] * b1
                    f[j, 2 * e + 1] = dinv[j, e, 1, 0] * b0 + dinv[j, e, 1, 1] * b1
                    fin = f[j, 2 * e + 1]
                    first = False
            elif v < 0.0:
                fin = 0.0
                first = True
                for e in range(n_el - 1, -1, -1):
                    b0 = base[j, 2 * e] + srho[2 * e]
                    b1 = base[j, 2 * e + 1] + srho[2 * e + 1]
                    if not first:
                        b1 += dt * (-v) * fin
                    f[j, 2 * e] = dinv[j, e, 0, 0] * b0 + dinv[j, e, 0, 1] * b1
                    f[j, 2 * e + 1] = dinv[j, e, 1, 0] * b0 + dinv[j, e, 1, 1] * b1
                    fin = f[j, 2 * e]
                    first = False
            else:
                for e in range(n_el):
                    b0 = base[j, 2 * e] + srho[2 * e]
                    b1 = base[j, 2 * e + 1] + srho[2 * e + 1]
                    f[j, 2 * e] = dinv[j, e, 0, 0] * b0 + dinv[j, e, 0, 1] * b1
                    f[j, 2 * e + 1] = dinv[j, e, 1, 0] * b0 + dinv[j, e, 1, 1] * b1

        # Residual of the coupled system is dt*sigma_s*(M @ (rho_new - rho))
        # repeated over every velocity block.
        res2 = 0.0
        maxabs = 0.0
        for e in range(n_el):
            i0 = 2 * e
            i1 = 2 * e + 1
            new0 = 0.0
            new1 = 0.0
            for j in range(n_v):
                new0 += weights[j] * f[j, i0]
                new1 += weights[j] * f[j, i1]
            d0 = new0 - rho[i0]
            d1 = new1 - rho[i1]
            c = dt_sig_s[e]
            r0 = c * (mass[0, 0] * d0 + mass[0, 1] * d1)
            r1 = c * (mass[1, 0] * d0 + mass[1, 1] * d1)
            res2 += r0 * r0 + r1 * r1
            if abs(d0) > maxabs:
                maxabs = abs(d0)
            if abs(d1) > maxabs:
                maxabs = abs(d1)
            rho[i0] = new0
            rho[i1] = new1

        res = np.sqrt(n_v * res2)
        res_hist[k] = res
        k += 1
        if res <= tol * bnorm or maxabs == 0.0:
            break

    return f, rho, k, res_hist[:k], bnorm


class _SweepSolver:
    """Per-element 2x2 inverses and kernel inputs for a fixed (alpha, dt)."""

    def __init__(self, ops: DgOperators, dt: float, alpha: float):
        if dt <= 0:
            raise InvalidArgument("dt must be positive")
        self.ops = ops
        self.dt = float(dt)
        n_v = ops.quad.n_velocities
        n_el = ops.mesh.n_elements
        n_x = ops.mesh.n_dofs
        mass = ops.mass_element
        sig_t = ops.xs.sigma_t

        # Diagonal 2x2 blocks of the per-velocity streaming matrices.
        diag = ops.streaming.reshape(n_v, n_el, 2, n_el, 2)
        idx = np.arange(n_el)
        diag = diag[:, idx, :, idx, :].transpose(1, 0, 2, 3)  # (n_v, n_el, 2, 2)
        blocks = (
            alpha * mass
            + self.dt * sig_t[None, :, None, None] * mass
            + self.dt * diag
        )
        self.dinv = np.ascontiguousarray(np.linalg.inv(blocks))
        self.mass = np.ascontiguousarray(mass)
        self.dt_sig_s = np.ascontiguousarray(self.dt * ops.xs.sigma_s)
        self.weights = np.ascontiguousarray(ops.quad.weights)
        self.vels = np.ascontiguousarray(ops.quad.nodes)
        self.n_v, self.n_x, self.n_el = n_v, n_x, n_el

    def solve(self, u, source, inflow_left, inflow_right, rho_guess, tol, max_iters):
        """Solve (alpha*M + dt*L) f = M*(u + dt*G) + dt*(boundary inflow)."""
        n_v, n_x, n_el = self.n_v, self.n_x, self.n_el
        dt = self.dt
        u2 = u.reshape(n_v, n_x)
        g2 = source.reshape(n_v, n_x)
        mass = self.mass

        work = (u2 + dt * g2).reshape(n_v, n_el, 2)
        base = np.einsum("ab,jeb->jea", mass, work).reshape(n_v, n_x)
        vpos = self.vels > 0
        vneg = self.vels < 0
        base[vpos, 0] += dt * self.vels[vpos] * inflow_left
        base[vneg, n_x - 1] += dt * (-self.vels[vneg]) * inflow_right

        f, rho, iters, res_hist, bnorm = _implicit_solve(
            np.ascontiguousarray(base),
            self.dinv,
            self.mass,
            self.dt_sig_s,
            self.weights,
            self.vels,
            dt,
            np.ascontiguousarray(rho_guess),
            tol,
            max_iters,
        )
        if iters >= max_iters and res_hist[-1] > tol * bnorm:
            raise NumericalFailure(
                f"scattering iteration did not converge in {max_iters} iterations "
                f"(relative residual {res_hist[-1] / max(bnorm, 1e-300):.3e})",
                residual=float(res_hist[-1] / max(bnorm, 1e-300)),
                iteration=int(iters),
            )
        return f.reshape(-1), rho, iters, res_hist


def _check_step_args(state: FomState, ops: DgOperators, source: np.ndarray):
    source = np.asarray(source, dtype=np.float64)
    if state.n_dofs != ops.n_dofs:
        raise InvalidArgument(
            f"state has {state.n_dofs} dofs, operators expect {ops.n_dofs}"
        )
    if source.shape != (ops.n_dofs,):
        raise InvalidArgument(f"source must have shape ({ops.n_dofs},)")
    return source


def step_backward_euler(
    state: FomState,
    ops: DgOperators,
    source: np.ndarray,
    dt: float,
    inflow_left: float = 0.0,
    inflow_right: float = 0.0,
    *,
    tol: float = 1e-12,
    max_iters: int = 500,
) -> FomState:
    """One backward Euler step: (I + dt*L) f_new = f + dt*(G + inflow)."""
    source = _check_step_args(state, ops, source)
    solver = _SweepSolver(ops, dt, alpha=1.0)
    rho_guess = ops.velocity_average(state.values)
    f, _, _, _ = solver.solve(
        state.values, source, inflow_left, inflow_right, rho_guess, tol, max_iters
    )
    return FomState(f, state.time + dt)


def step_bdf2(
    state_n: FomState,
    state_nm1: FomState,
    ops: DgOperators,
    source: np.ndarray,
    dt: float,
    inflow_left: float = 0.0,
    inflow_right: float = 0.0,
    *,
    tol: float = 1e-12,
    max_iters: int = 500,
) -> FomState:
    """One BDF2 step: (3/2 I + dt*L) f_new = 2 f_n - 1/2 f_{n-1} + dt*(G + inflow)."""
    source = _check_step_args(state_n, ops, source)
    if state_nm1.n_dofs != state_n.n_dofs:
        raise InvalidArgument("history states have mismatched sizes")
    solver = _SweepSolver(ops, dt, alpha=1.5)
    u = 2.0 * state_n.values - 0.5 * state_nm1.values
    rho_guess = ops.velocity_average(state_n.values)
    f, _, _, _ = solver.solve(
        u, source, inflow_left, inflow_right, rho_guess, tol, max_iters
    )
    return FomState(f, state_n.time + dt)


def run(
    spec: ProblemSpec,
    mu,
    sample_times: Sequence[float],
    *,
    method: str = "backward-euler",
    tol: float = 1e-12,
    max_iters: int = 500,
) -> list[FomState]:
    """March the full-order model for one parameter and sample states.

    ``sample_times`` must lie on the time grid; the returned list matches
    their order.  The result is deterministic for fixed inputs.
    """
    if method not in ("backward-euler", "bdf2"):
        raise InvalidArgument(f"unknown time integrator {method!r}")
    wanted = [spec.grid_index(t) for t in sample_times]
    ops = spec.discretize(mu)
    source = spec.source_vector(ops)
    state = spec.initial_state(ops)

    collected: dict[int, FomState] = {}
    if 0 in wanted:
        collected[0] = state
    last_step = max(wanted, default=0)

    be = _SweepSolver(ops, spec.dt, alpha=1.0)
    bdf = _SweepSolver(ops, spec.dt, alpha=1.5) if method == "bdf2" else None

    rho = ops.velocity_average(state.values)
    prev: FomState | None = None
    for n in range(last_step):
        t_next = (n + 1) * spec.dt
        g_left = float(spec.inflow_left(t_next, mu))
        g_right = float(spec.inflow_right(t_next, mu))
        try:
            if method == "bdf2" and prev is not None:
                u = 2.0 * state.values - 0.5 * prev.values
                f, rho, _, _ = bdf.solve(u, source, g_left, g_right, rho, tol, max_iters)
            else:
                f, rho, _, _ = be.solve(
                    state.values, source, g_left, g_right, rho, tol, max_iters
                )
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"step to t={t_next} (mu={mu}) failed: {exc}",
                residual=exc.residual,
                iteration=exc.iteration,
            ) from exc
        prev = state
        state = FomState(f, t_next)
        if n + 1 in collected or (n + 1) in wanted:
            collected[n + 1] = state

    return [collected[k] for k in wanted]
