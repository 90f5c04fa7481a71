"""Angular quadrature, 1D mesh, and upwind DG operators.

The velocity space [-1, 1] carries the normalized measure (1/2)dv, so the
Gauss-Legendre weights returned here sum to one.  Space is discretized with
a nodal linear discontinuous Galerkin basis (two nodes per element, at the
element endpoints) and upwind numerical fluxes, which makes the per-velocity
streaming operator block-triangular in the element ordering and therefore
solvable by a single sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "AngularQuadrature",
    "Mesh1D",
    "CrossSections",
    "DgOperators",
    "gauss_legendre",
    "build_mesh",
    "assemble_dg",
]


def _legendre_and_derivative(n: int, x: float) -> tuple[float, float]:
    """Evaluate P_n(x) and P_n'(x) by the three-term recurrence."""
    p_prev, p = 1.0, x
    if n == 0:
        return 1.0, 0.0
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete velocity nodes and weights under the normalized measure.

    Invariants: nodes strictly increasing and symmetric about zero, weights
    positive and summing to one, and an n-point rule integrates v**k exactly
    for k <= 2n-1 against (1/2)dv.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise InvalidArgument("nodes and weights must be 1D and matching")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_velocities(self) -> int:
        return self.nodes.size

    def average(self, values: np.ndarray) -> np.ndarray:
        """Weighted velocity average of per-velocity data.

        ``values`` has the velocity axis first; returns the contraction
        sum_j w_j * values[j].
        """
        values = np.asarray(values)
        if values.shape[0] != self.n_velocities:
            raise InvalidArgument(
                f"expected leading axis {self.n_velocities}, got {values.shape[0]}"
            )
        return np.tensordot(self.weights, values, axes=(0, 0))


def gauss_legendre(n: int) -> AngularQuadrature:
    """Gauss-Legendre rule on [-1, 1] with weights scaled to sum to one.

    Roots of P_n are found by Newton iteration started from the Chebyshev
    angles, which converges to full double precision in a handful of steps.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"quadrature size must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return AngularQuadrature(np.array([0.0]), np.array([1.0]))

    half = n // 2
    roots = np.empty(half)
    halved_weights = np.empty(half)
    for i in range(half):
        # Chebyshev initial guess for the i-th positive-side root.
        x = math.cos(math.pi * (i + 0.75) / (n + 0.5))
        for _ in range(100):
            p, dp = _legendre_and_derivative(n, x)
            dx = p / dp
            x -= dx
            if abs(dx) <= 1e-15:
                break
        _, dp = _legendre_and_derivative(n, x)
        roots[i] = abs(x)
        # Classical weight 2/((1-x^2) P'^2), halved for the (1/2)dv measure.
        halved_weights[i] = 1.0 / ((1.0 - x * x) * dp * dp)

    order = np.argsort(roots)
    roots, halved_weights = roots[order], halved_weights[order]
    if n % 2:
        _, dp0 = _legendre_and_derivative(n, 0.0)
        w0 = 1.0 / (dp0 * dp0)
        nodes = np.concatenate([-roots[::-1], [0.0], roots])
        weights = np.concatenate([halved_weights[::-1], [w0], halved_weights])
    else:
        nodes = np.concatenate([-roots[::-1], roots])
        weights = np.concatenate([halved_weights[::-1], halved_weights])
    return AngularQuadrature(nodes, weights)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of an interval into linear DG elements.

    Each element carries two nodal degrees of freedom located at its
    endpoints; element e owns global dofs 2e and 2e+1.
    """

    left: float
    right: float
    n_elements: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_elements

    @property
    def element_width(self) -> float:
        return (self.right - self.left) / self.n_elements

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def node_coordinates(self) -> np.ndarray:
        """Coordinates of all 2*n_elements dofs (duplicated at interior faces)."""
        coords = np.empty(self.n_dofs)
        coords[0::2] = self.edges[:-1]
        coords[1::2] = self.edges[1:]
        return coords


def build_mesh(domain: tuple[float, float], n_elements: int) -> Mesh1D:
    """Uniformly partition ``domain`` into ``n_elements`` linear DG elements."""
    left, right = float(domain[0]), float(domain[1])
    if not (right > left) or not np.isfinite([left, right]).all():
        raise InvalidArgument(f"domain must be a nondegenerate interval, got {domain!r}")
    if not isinstance(n_elements, (int, np.integer)) or n_elements < 1:
        raise InvalidArgument(f"element count must be a positive integer, got {n_elements!r}")
    edges = np.linspace(left, right, int(n_elements) + 1)
    return Mesh1D(left, right, int(n_elements), edges)


@dataclass(frozen=True)
class CrossSections:
    """Scattering and absorption cross sections, piecewise constant in x.

    Values are sampled at element midpoints; the total cross section is
    always the derived sum and never stored separately.
    """

    sigma_s: np.ndarray
    sigma_a: np.ndarray

    def __post_init__(self):
        ss = np.asarray(self.sigma_s, dtype=np.float64)
        sa = np.asarray(self.sigma_a, dtype=np.float64)
        if ss.shape != sa.shape or ss.ndim != 1:
            raise InvalidArgument("cross section arrays must be matching 1D arrays")
        if (ss < 0).any() or (sa < 0).any():
            raise InvalidArgument("cross sections must be nonnegative")
        ss.setflags(write=False)
        sa.setflags(write=False)
        object.__setattr__(self, "sigma_s", ss)
        object.__setattr__(self, "sigma_a", sa)

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_s + self.sigma_a

    @classmethod
    def from_functions(
        cls,
        mesh: Mesh1D,
        sigma_s: Callable[[float], float],
        sigma_a: Callable[[float], float],
    ) -> "CrossSections":
        mids = mesh.midpoints
        return cls(
            np.array([float(sigma_s(x)) for x in mids]),
            np.array([float(sigma_a(x)) for x in mids]),
        )


# Element matrices for the nodal linear basis on an element of width h.
# Mass: (h/6) [[2, 1], [1, 2]].  Streaming (flux + volume) self-coupling:
#   v > 0:  v * [[ 1/2, 1/2], [-1/2, 1/2]],  upstream coupling -v on the
#           left neighbour's right node;
#   v < 0:  v * [[-1/2, 1/2], [-1/2,-1/2]],  upstream coupling +v on the
#           right neighbour's left node.
def _self_block(v: float) -> np.ndarray:
    if v > 0:
        return v * np.array([[0.5, 0.5], [-0.5, 0.5]])
    return v * np.array([[-0.5, 0.5], [-0.5, -0.5]])


@dataclass(frozen=True)
class DgOperators:
    """Assembled discrete operators for the semi-discrete system.

    ``streaming[j]`` is the weak-form upwind streaming matrix for velocity
    ``quad.nodes[j]`` (mass matrix not applied), block lower-triangular for
    positive velocities and block upper-triangular for negative ones.
    ``inflow_vectors[j]`` injects a unit inflow trace through the boundary
    face seen by velocity j; it multiplies the prescribed boundary value and
    adds to the right-hand side of the weak form.
    """

    mesh: Mesh1D
    quad: AngularQuadrature
    xs: CrossSections
    mass_element: np.ndarray
    streaming: np.ndarray
    inflow_vectors: np.ndarray

    def __post_init__(self):
        for name in ("mass_element", "streaming", "inflow_vectors"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_dofs(self) -> int:
        """Total dof count n_h = n_x * n_v (velocity-major ordering)."""
        return self.mesh.n_dofs * self.quad.n_velocities

    def mass_matrix(self) -> np.ndarray:
        """Dense spatial mass matrix (block diagonal, one 2x2 block per element)."""
        n_x = self.mesh.n_dofs
        m = np.zeros((n_x, n_x))
        for e in range(self.mesh.n_elements):
            m[2 * e : 2 * e + 2, 2 * e : 2 * e + 2] = self.mass_element
        return m

    def velocity_average(self, f: np.ndarray) -> np.ndarray:
        """Weighted velocity average of a flat velocity-major state vector."""
        n_x = self.mesh.n_dofs
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.n_dofs,):
            raise InvalidArgument(f"state must have shape ({self.n_dofs},), got {f.shape}")
        return self.quad.weights @ f.reshape(self.quad.n_velocities, n_x)

    def broadcast(self, rho: np.ndarray) -> np.ndarray:
        """Replicate a spatial field across all velocities (flat layout)."""
        rho = np.asarray(rho, dtype=np.float64)
        if rho.shape != (self.mesh.n_dofs,):
            raise InvalidArgument("field must have one value per spatial dof")
        return np.tile(rho, self.quad.n_velocities)

    def semidiscrete_rhs(
        self,
        f: np.ndarray,
        source: np.ndarray,
        inflow_left: float,
        inflow_right: float,
    ) -> np.ndarray:
        """Evaluate df/dt for the semi-discrete system at state ``f``.

        ``source`` is the isotropic volumetric source on spatial dofs.
        Intended for verification; the time steppers use sweep kernels.
        """
        n_x = self.mesh.n_dofs
        n_v = self.quad.n_velocities
        f2 = np.asarray(f, dtype=np.float64).reshape(n_v, n_x)
        rho = self.quad.weights @ f2
        minv = np.linalg.inv(self.mass_element)
        out = np.empty_like(f2)
        for j, v in enumerate(self.quad.nodes):
            g = inflow_left if v > 0 else inflow_right
            weak = -self.streaming[j] @ f2[j] + g * self.inflow_vectors[j]
            stream = (minv @ weak.reshape(-1, 2).T).T.reshape(-1)
            out[j] = stream + self.xs.sigma_s.repeat(2) * (rho - f2[j])
            out[j] -= self.xs.sigma_a.repeat(2) * f2[j]
            out[j] += source
        return out.reshape(-1)


def assemble_dg(mesh: Mesh1D, quad: AngularQuadrature, xs: CrossSections) -> DgOperators:
    """Assemble upwind DG streaming matrices and inflow injection vectors.

    All element integrals are exact for the linear basis, so the only
    approximation in space is the DG discretization itself.
    """
    if xs.sigma_s.shape != (mesh.n_elements,):
        raise InvalidArgument(
            f"cross sections must supply one value per element "
            f"({mesh.n_elements}), got {xs.sigma_s.shape}"
        )
    h = mesh.element_width
    n_x = mesh.n_dofs
    n_el = mesh.n_elements
    mass = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])

    streaming = np.zeros((quad.n_velocities, n_x, n_x))
    inflow = np.zeros((quad.n_velocities, n_x))
    for j, v in enumerate(quad.nodes):
        block = _self_block(v)
        sj = streaming[j]
        for e in range(n_el):
            sj[2 * e : 2 * e + 2, 2 * e : 2 * e + 2] = block
        if v > 0:
            for e in range(1, n_el):
                sj[2 * e, 2 * e - 1] = -v  # upwind trace from the left neighbour
            inflow[j, 0] = v  # left boundary face feeds the first element
        elif v < 0:
            for e in range(n_el - 1):
                sj[2 * e + 1, 2 * e + 2] = v  # upwind trace from the right neighbour
            inflow[j, n_x - 1] = -v  # right boundary face feeds the last element
        # v == 0 carries no streaming and no boundary face.
    return DgOperators(mesh, quad, xs, mass, streaming, inflow)
