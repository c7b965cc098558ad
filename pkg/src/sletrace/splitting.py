"""Splitting-scheme engine for the backward Loewner SDE dZ = -(2/Z) dt + sqrt(kappa) dB.

The scheme composes the two exactly-solvable flows of the equation per step:
the drift half-flow z -> sqrt(z^2 - 2h) on each side of the noise translation
z -> z + sqrt(kappa) * dB (a Strang splitting).  Both flows map the upper
half-plane into itself and never lower the imaginary part, so trajectories
started at i*y0 with y0 > 0 stay interior forever.

Also here: the equivalent constant-map composition (a cross-check built from
the forward module's closed-form backward maps), the closed-form dense output
inside a step, tolerance-driven adaptive refinement, a capped Euler-Maruyama
reference scheme, and a vectorized endpoint ensemble for moment checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .brownian import (
    TAG_ENSEMBLE,
    BrownianPath,
    keyed_normals,
    refine_midpoint,
)
from .forward import constant_backward_map
from .halfplane import Trace, require_interior, sqrt_upper

__all__ = [
    "AdaptiveResult",
    "SchemeConfig",
    "SchemeKind",
    "adaptive_run",
    "auto_y0",
    "compose_constant_maps",
    "dense_eval",
    "flow_l0",
    "flow_l1",
    "nv_endpoint_ensemble",
    "nv_step",
    "run_euler",
    "run_nv",
    "run_scheme",
]


class SchemeKind(str, Enum):
    NV = "nv"
    PIECEWISE_CONSTANT = "piecewise-constant"
    EULER_REFERENCE = "euler-reference"


def auto_y0(n: int) -> float:
    """Resolution-coupled start height y = n^(-1/2)."""
    if n < 1:
        raise ValueError("resolution must be >= 1")
    return 1.0 / math.sqrt(n)


@dataclass(frozen=True)
class SchemeConfig:
    """Run parameters for a backward-flow scheme."""

    kappa: float
    y0: float
    horizon: float = 1.0
    scheme: SchemeKind = SchemeKind.NV
    tolerance: float | None = None
    max_refine_depth: int = 20

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa > 0.0):
            raise ValueError("kappa must be positive")
        if self.kappa == 8.0:
            warnings.warn("kappa = 8: the convergence guarantees exclude this "
                          "value, though the scheme itself is well-defined",
                          stacklevel=2)
        if not (math.isfinite(self.y0) and self.y0 > 0.0):
            raise ValueError("y0 must be positive")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError("horizon must be positive")
        if self.tolerance is not None and not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive when set")
        if self.max_refine_depth < 0:
            raise ValueError("max_refine_depth must be >= 0")


def flow_l0(z: complex, t: float) -> complex:
    """Drift flow for time t: z -> sqrt(z^2 - 4t).

    Strictly raises the imaginary part for t > 0.  Interior points only.
    """
    z = require_interior(z)
    if not (math.isfinite(t) and t >= 0.0):
        raise ValueError("flow time must be finite and >= 0")
    return sqrt_upper(z * z - 4.0 * t)


def flow_l1(z: complex, b: float, kappa: float) -> complex:
    """Noise flow: horizontal translation z -> z + sqrt(kappa) * b."""
    if not (math.isfinite(kappa) and kappa > 0.0):
        raise ValueError("kappa must be positive")
    if not math.isfinite(b):
        raise ValueError("translation amount must be finite")
    return complex(z) + math.sqrt(kappa) * b


def nv_step(z: complex, h: float, dB: float, kappa: float) -> complex:
    """One splitting step over an interval of width h with increment dB."""
    if not (math.isfinite(h) and h > 0.0):
        raise ValueError("step width must be positive")
    return flow_l0(flow_l1(flow_l0(z, 0.5 * h), dB, kappa), 0.5 * h)


def _check_span(config: SchemeConfig, path: BrownianPath) -> None:
    if path.grid.horizon != config.horizon:
        raise ValueError(
            f"path grid spans [0, {path.grid.horizon}], config wants [0, {config.horizon}]")


def run_nv(config: SchemeConfig, path: BrownianPath) -> Trace:
    """Run the splitting scheme from i*y0 across the path's grid."""
    _check_span(config, path)
    t = path.grid.times
    w = path.values
    z = complex(0.0, config.y0)
    points = np.empty(t.size, dtype=complex)
    points[0] = z
    for k in range(t.size - 1):
        z = nv_step(z, t[k + 1] - t[k], w[k + 1] - w[k], config.kappa)
        points[k + 1] = z
    return Trace(t, points)


def compose_constant_maps(config: SchemeConfig, path: BrownianPath) -> Trace:
    """The same trajectory as ``run_nv``, built from constant-driver maps.

    Per interval: backward map with force 0 for half the width, translation by
    sqrt(kappa) * dB, backward map again.  Gridpoint-identical to the
    splitting step up to roundoff; serves as a structural cross-check.
    """
    _check_span(config, path)
    t = path.grid.times
    w = path.values
    sqrt_kappa = math.sqrt(config.kappa)
    z = complex(0.0, config.y0)
    points = np.empty(t.size, dtype=complex)
    points[0] = z
    for k in range(t.size - 1):
        half = 0.5 * (t[k + 1] - t[k])
        z = constant_backward_map(z, 0.0, half)
        z = z + sqrt_kappa * (w[k + 1] - w[k])
        z = constant_backward_map(z, 0.0, half)
        points[k + 1] = z
    return Trace(t, points)


def dense_eval(z_k: complex, h: float, dB_partial: float, dB_full: float,
               s: float, kappa: float) -> complex:
    """Closed-form scheme state at time t_k + s inside a step of width h.

    dB_partial is the Brownian increment up to t_k + s, dB_full the increment
    over the whole step.  At s = 0 this returns z_k; at s = h with
    dB_partial == dB_full it telescopes to the full step.
    """
    z = require_interior(z_k)
    if not (math.isfinite(h) and h > 0.0):
        raise ValueError("step width must be positive")
    if not 0.0 <= s <= h:
        raise ValueError(f"s = {s} outside [0, {h}]")
    if not (math.isfinite(kappa) and kappa > 0.0):
        raise ValueError("kappa must be positive")
    sqrt_kappa = math.sqrt(kappa)
    b = sqrt_upper(z * z - 2.0 * h) + sqrt_kappa * dB_full
    return (z + sqrt_kappa * dB_partial
            - 2.0 * s / (sqrt_upper(z * z - 2.0 * s) + z)
            - 2.0 * s / (sqrt_upper(b * b - 2.0 * s) + b))


@dataclass(frozen=True)
class AdaptiveResult:
    """Adaptive run output: trace on the refined grid, the refined path, and
    the indices of accepted steps that still exceed the tolerance at the
    refinement depth cap (step i runs from trace node i to i+1)."""

    trace: Trace
    path: BrownianPath
    flagged: tuple


def adaptive_run(config: SchemeConfig, path: BrownianPath, seed_step: int = 0) -> AdaptiveResult:
    """Run the splitting scheme, bisecting any interval whose step moves the
    state by more than the configured tolerance.

    Midpoints are inserted as Brownian-bridge draws, so the refined path is a
    legitimate finer sample of the same realization.  Each original interval
    is bisected at most ``max_refine_depth`` times; a step still violating the
    tolerance at the cap is accepted and flagged rather than raised.
    """
    if config.tolerance is None:
        raise ValueError("adaptive_run requires a tolerance")
    _check_span(config, path)
    tau = config.tolerance
    kappa = config.kappa

    current = path
    times = [0.0]
    points = [complex(0.0, config.y0)]
    flagged = []

    def node_value(t: float) -> float:
        grid_times = current.grid.times
        i = int(np.searchsorted(grid_times, t))
        return float(current.values[i])

    def advance(z: complex, a: float, b: float, depth: int) -> complex:
        nonlocal current
        z_next = nv_step(z, b - a, node_value(b) - node_value(a), kappa)
        if abs(z_next - z) > tau and depth < config.max_refine_depth:
            k = int(np.searchsorted(current.grid.times, a))
            current = refine_midpoint(current, k, seed_step)
            m = 0.5 * (a + b)
            z = advance(z, a, m, depth + 1)
            return advance(z, m, b, depth + 1)
        if abs(z_next - z) > tau:
            flagged.append(len(points) - 1)
        times.append(b)
        points.append(z_next)
        return z_next

    z = points[0]
    for a, b in zip(path.grid.times, path.grid.times[1:]):
        z = advance(z, float(a), float(b), 0)
    return AdaptiveResult(Trace(np.array(times), np.array(points)), current,
                          tuple(flagged))


def run_euler(config: SchemeConfig, path: BrownianPath) -> Trace:
    """Euler-Maruyama reference on the same SDE, with a capped drift step.

    The drift increment -2h/Z is rescaled whenever its magnitude exceeds half
    the current height, which keeps the iteration inside the half-plane.  Not
    a splitting scheme; exists as an independent cross-family reference.
    """
    _check_span(config, path)
    t = path.grid.times
    w = path.values
    sqrt_kappa = math.sqrt(config.kappa)
    z = complex(0.0, config.y0)
    points = np.empty(t.size, dtype=complex)
    points[0] = z
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        drift = -2.0 * h / z
        cap = 0.5 * z.imag
        mag = abs(drift)
        if mag > cap:
            drift *= cap / mag
        z = z + drift + sqrt_kappa * (w[k + 1] - w[k])
        points[k + 1] = z
    return Trace(t, points)


def run_scheme(config: SchemeConfig, path: BrownianPath) -> Trace:
    """Dispatch on config.scheme."""
    if config.scheme is SchemeKind.NV:
        return run_nv(config, path)
    if config.scheme is SchemeKind.PIECEWISE_CONSTANT:
        return compose_constant_maps(config, path)
    if config.scheme is SchemeKind.EULER_REFERENCE:
        return run_euler(config, path)
    raise ValueError(f"unknown scheme {config.scheme!r}")


def nv_endpoint_ensemble(kappa: float, y0: float, n: int, samples: int,
                         seed: int, horizon: float = 1.0) -> np.ndarray:
    """Endpoints Z_T of the splitting scheme over independent Brownian paths.

    Vectorized across samples on a uniform n-step grid; sample j consumes the
    keyed stream (seed, ensemble tag, step k, sample j), so the ensemble is
    reproducible and independent of chunking or thread count.
    """
    config = SchemeConfig(kappa=kappa, y0=y0, horizon=horizon)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    h = horizon / n
    sqrt_kappa = math.sqrt(config.kappa)
    sqrt_h = math.sqrt(h)
    idx = np.arange(samples, dtype=np.uint64)
    z = np.full(samples, complex(0.0, y0))
    for k in range(n):
        nodes = (np.uint64(k) << np.uint64(32)) ^ idx
        db = sqrt_h * keyed_normals(seed, TAG_ENSEMBLE, nodes)
        z = sqrt_upper(z * z - 2.0 * h)
        z = z + sqrt_kappa * db
        z = sqrt_upper(z * z - 2.0 * h)
    return z
