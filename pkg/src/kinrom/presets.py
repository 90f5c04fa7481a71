"""Built-in experiment setups and translation of config blocks into
solvable problem definitions."""

from __future__ import annotations

import numpy as np

from .config import (
    AeBlock,
    CustomProblem,
    GaussianInitial,
    IoBlock,
    LinearParams,
    ProblemBlock,
    RandomParams,
    RomBlock,
    RunConfig,
    SamplingBlock,
)
from .errors import InvalidArgument
from .fom import ProblemSpec

__all__ = [
    "example1_problem",
    "example2_problem",
    "build_problem",
    "resolve_sample_times",
    "preset_config",
]


def example1_problem() -> ProblemSpec:
    """Two-material slab: free streaming for x <= 1, strong scattering
    beyond, parametric left inflow, zero initial data."""
    return ProblemSpec(
        domain=(0.0, 1.1),
        n_elements=88,
        n_velocities=16,
        sigma_s=lambda x, mu: 0.0 if x <= 1.0 else 100.0,
        sigma_a=lambda x, mu: 0.0,
        source=lambda x: 0.0,
        inflow_left=lambda t, mu: float(mu),
        inflow_right=lambda t, mu: 0.0,
        initial=lambda x, v: 0.0,
        final_time=25.0,
        dt=1.0 / 80.0,
        param_ranges=((4.0, 6.0),),
    )


def example2_problem() -> ProblemSpec:
    """Three-material slab with a central void, parametric scattering on
    the right, a box source, and a narrow Gaussian spike at x = 1."""

    def sigma_s(x, mu):
        if abs(x - 1.0) <= 0.3:
            return 0.0
        if x > 1.3:
            return float(mu)
        return 5.0

    return ProblemSpec(
        domain=(0.0, 2.0),
        n_elements=128,
        n_velocities=16,
        sigma_s=sigma_s,
        sigma_a=lambda x, mu: 0.0,
        source=lambda x: 1.0 if abs(x - 1.0) <= 0.5 else 0.0,
        inflow_left=lambda t, mu: 0.0,
        inflow_right=lambda t, mu: 0.0,
        initial=lambda x, v: 1e3 * np.exp(-((x - 1.0) ** 2) / 1e-6),
        final_time=20.0,
        dt=0.01,
        param_ranges=((75.0, 150.0),),
    )


_PRESET_PROBLEMS = {"example1": example1_problem, "example2": example2_problem}


def _piecewise(regions, x, mu):
    for region in regions:
        if x <= region.upto + 1e-12:
            return float(mu) if region.value == "mu" else float(region.value)
    return float(mu) if regions[-1].value == "mu" else float(regions[-1].value)


def _initial_fn(block: CustomProblem):
    if block.initial == "zero":
        return lambda x, v: 0.0
    g: GaussianInitial = block.initial
    return lambda x, v: g.amplitude * np.exp(-((x - g.center) ** 2) / g.width_sq)


def build_problem(block: ProblemBlock) -> ProblemSpec:
    if block.preset is not None:
        return _PRESET_PROBLEMS[block.preset]()
    c = block.custom

    def const_or_mu(value):
        return (lambda t, mu: float(mu)) if value == "mu" else (lambda t, mu, v=value: float(v))

    return ProblemSpec(
        domain=tuple(c.domain),
        n_elements=c.n_elements,
        n_velocities=c.n_velocities,
        sigma_s=lambda x, mu, r=c.sigma_s: _piecewise(r, x, mu),
        sigma_a=lambda x, mu, r=c.sigma_a: _piecewise(r, x, mu),
        source=lambda x, r=c.source: _piecewise(r, x, 0.0),
        inflow_left=const_or_mu(c.inflow_left),
        inflow_right=const_or_mu(c.inflow_right),
        initial=_initial_fn(c),
        final_time=c.final_time,
        dt=c.dt,
    )


def resolve_sample_times(spec: ProblemSpec, sampling: SamplingBlock) -> np.ndarray:
    """Sample times from a stride or an explicit list, validated on-grid."""
    if sampling.sample_stride is not None:
        stride = sampling.sample_stride
        steps = np.arange(stride, spec.n_steps + 1, stride)
        if steps.size == 0:
            raise InvalidArgument("sample stride leaves no sample times")
        return steps * spec.dt
    times = np.asarray(sampling.sample_times, dtype=np.float64)
    for t in times:
        spec.grid_index(float(t))
    if (np.diff(times) <= 0).any():
        raise InvalidArgument("sample times must be strictly increasing")
    return times


def _example2_sample_times() -> list[float]:
    # 200 uniformly spread times in [0.01, 20], snapped to the 0.01 grid.
    raw = np.linspace(0.01, 20.0, 200)
    snapped = np.round(raw / 0.01) * 0.01
    return [float(t) for t in snapped]


def preset_config(name: str) -> RunConfig:
    """Full default configuration for a built-in experiment."""
    if name == "example1":
        return RunConfig(
            problem=ProblemBlock(preset="example1"),
            sampling=SamplingBlock(
                training_params=LinearParams(start=4.0, step=0.2, count=11),
                sample_stride=1,
                test_params=RandomParams(count=5, range=(4.0, 6.0)),
                seed=0,
            ),
            rom=RomBlock(
                method="adaptive",
                pod_tol=1e-4,
                rule="energy",
                k=4,
                r_max=15,
                r_min=5,
                equilibrium_detection=True,
                tau_min=6.25,
                ae=AeBlock(latent=8, channels=(24, 24, 24, 12), epochs=2000,
                           batch_size=256, learning_rate=1e-3, schedule="plateau"),
            ),
            io=IoBlock(workdir="kinrom_out/example1"),
        )
    if name == "example2":
        return RunConfig(
            problem=ProblemBlock(preset="example2"),
            sampling=SamplingBlock(
                training_params=LinearParams(start=80.0, step=1.0, count=64),
                sample_times=_example2_sample_times(),
                test_params=RandomParams(count=10, range=(75.0, 150.0)),
                seed=0,
            ),
            rom=RomBlock(
                method="adaptive",
                pod_tol=1e-4,
                rule="energy",
                k=10,
                r_max=20,
                r_min=10,
                equilibrium_detection=True,
                tau_min=10.0,
                ae=AeBlock(latent=4, channels=(32, 32, 32, 16), epochs=2000,
                           batch_size=256, learning_rate=2e-4, schedule="step",
                           weight_decay=1e-7),
            ),
            io=IoBlock(workdir="kinrom_out/example2"),
        )
    raise InvalidArgument(f"unknown preset {name!r}")
