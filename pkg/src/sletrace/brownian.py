"""Brownian paths on time grids: seeded sampling, bridge refinement, driver views.

Randomness is counter-based: every Gaussian draw is a pure function of
(seed, purpose tag, node key), where the node key is the bit pattern of the
time the draw is attached to.  Refining an interval therefore consumes
randomness that is independent of every other draw, the same path can be
reused across resolutions, and results never depend on evaluation order or
thread count.  Draws go through the inverse normal CDF of a hashed uniform,
which keeps them bit-reproducible across platforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .halfplane import TimeGrid

__all__ = [
    "BrownianPath",
    "DriverKind",
    "DriverSegment",
    "driver_view",
    "path_to_csv",
    "refine_all_midpoints",
    "refine_midpoint",
    "sample_path",
    "zero_path",
]

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)

# Domain separation: one stream per purpose so draws never collide.
TAG_INCREMENT = 0x11
TAG_BRIDGE = 0x22
TAG_ENSEMBLE = 0x33


def _mix64(x):
    """splitmix64 finalizer; full-avalanche bijection on uint64."""
    x = (x ^ (x >> np.uint64(30))) * _MIX_A
    x = (x ^ (x >> np.uint64(27))) * _MIX_B
    return x ^ (x >> np.uint64(31))


def keyed_uniforms(seed: int, tag: int, nodes, extra: int = 0) -> np.ndarray:
    """Deterministic uniforms in (0, 1), keyed by (seed, tag, node, extra)."""
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.uint64))
    with np.errstate(over="ignore"):
        s = _mix64(np.uint64(seed & _MASK) + _GOLDEN)
        e = _mix64(np.uint64(extra & _MASK) ^ (np.uint64(tag & _MASK) * _GOLDEN))
        h = _mix64(_mix64(nodes ^ s) ^ e)
    # 53-bit mantissa, offset keeps the value strictly inside (0, 1)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54


def keyed_normals(seed: int, tag: int, nodes, extra: int = 0) -> np.ndarray:
    """Deterministic standard-normal draws via inverse CDF of keyed uniforms."""
    return ndtri(keyed_uniforms(seed, tag, nodes, extra))


def _time_keys(times: np.ndarray) -> np.ndarray:
    """Node keys: raw float64 bit patterns of the times."""
    return np.ascontiguousarray(np.asarray(times, dtype=np.float64)).view(np.uint64)


@dataclass(frozen=True)
class BrownianPath:
    """Standard Brownian motion W sampled on a grid, W(0) = 0.

    ``seed`` plus the bridge ``steps`` history form the reproducibility token:
    every value is a pure function of them and of the node times.
    """

    grid: TimeGrid
    values: np.ndarray
    seed: int
    steps: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.times.shape:
            raise ValueError("one Brownian value per grid node required")
        if not np.all(np.isfinite(v)):
            raise ValueError("Brownian values must be finite")
        if v[0] != 0.0:
            raise ValueError("Brownian path must start at W(0) = 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def seed_lineage(self) -> tuple:
        return (self.seed,) + tuple(self.steps)

    def restrict(self, grid: TimeGrid) -> "BrownianPath":
        """Restriction to a sub-grid; exact, no interpolation.

        Raises ValueError if ``grid`` has a node this path does not carry.
        """
        idx = np.searchsorted(self.grid.times, grid.times)
        idx = np.minimum(idx, self.grid.times.size - 1)
        if not np.array_equal(self.grid.times[idx], grid.times):
            raise ValueError("grid is not a sub-grid of the path's grid")
        return BrownianPath(grid, self.values[idx], self.seed, self.steps)


def sample_path(grid: TimeGrid, seed: int) -> BrownianPath:
    """Sample W on the grid: independent N(0, h_k) increments, W(0) = 0.

    Identical (grid, seed) gives bit-identical values.  Increment draws are
    keyed by the midpoint of their interval.
    """
    t = grid.times
    mids = 0.5 * (t[:-1] + t[1:])
    z = keyed_normals(seed, TAG_INCREMENT, _time_keys(mids))
    dw = np.sqrt(np.diff(t)) * z
    values = np.concatenate(([0.0], np.cumsum(dw)))
    return BrownianPath(grid, values, seed)


def zero_path(grid: TimeGrid, seed: int = 0) -> BrownianPath:
    """The identically-zero path (noise-free runs)."""
    return BrownianPath(grid, np.zeros(grid.times.size), seed)


def _bridge_values(path: BrownianPath, mids: np.ndarray, left: np.ndarray,
                   right: np.ndarray, widths: np.ndarray, seed_step: int) -> np.ndarray:
    # midpoint | endpoints  ~  N((W_a + W_b)/2, h/4)
    z = keyed_normals(path.seed, TAG_BRIDGE, _time_keys(mids), extra=seed_step)
    return 0.5 * (left + right) + 0.5 * np.sqrt(widths) * z


def refine_midpoint(path: BrownianPath, k: int, seed_step: int = 0) -> BrownianPath:
    """Insert the midpoint of interval k with a Brownian-bridge draw.

    All pre-existing nodes are unchanged to the last bit.  The draw is keyed
    by (seed, midpoint time, seed_step); pass distinct ``seed_step`` values to
    get independent bridge samples at the same node.
    """
    t = path.grid.times
    if not 0 <= k < t.size - 1:
        raise IndexError(f"interval index {k} out of range")
    a, b = t[k], t[k + 1]
    m = 0.5 * (a + b)
    w = _bridge_values(path,
                       np.array([m]),
                       path.values[k:k + 1],
                       path.values[k + 1:k + 2],
                       np.array([b - a]),
                       seed_step)
    new_times = np.insert(t, k + 1, m)
    new_values = np.insert(path.values, k + 1, w[0])
    return BrownianPath(TimeGrid(new_times), new_values, path.seed,
                        path.steps + (seed_step,))


def refine_all_midpoints(path: BrownianPath, seed_step: int = 0) -> BrownianPath:
    """Insert every interval midpoint at once (one bridge level).

    Produces exactly the same values as calling ``refine_midpoint`` on each
    interval in turn, but in vectorized form.
    """
    t = path.grid.times
    v = path.values
    mids = 0.5 * (t[:-1] + t[1:])
    w = _bridge_values(path, mids, v[:-1], v[1:], np.diff(t), seed_step)
    new_times = np.empty(2 * t.size - 1)
    new_values = np.empty_like(new_times)
    new_times[0::2] = t
    new_times[1::2] = mids
    new_values[0::2] = v
    new_values[1::2] = w
    return BrownianPath(TimeGrid(new_times), new_values, path.seed,
                        path.steps + (seed_step,))


class DriverKind(str, Enum):
    """Shape of one driver segment: step, chord, or square-root profile."""

    CONSTANT = "constant"
    LINEAR = "linear"
    SQRT = "sqrt"


@dataclass(frozen=True)
class DriverSegment:
    """One interval of a piecewise driving force.

    value(t) = b                        (constant)
             = b + a * (t - t_start)    (linear)
             = b + a * sqrt(t - t_start)  (sqrt profile)
    """

    kind: DriverKind
    t_start: float
    t_end: float
    a: float
    b: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("segment needs t_start < t_end")
        if not (math.isfinite(self.a) and math.isfinite(self.b)
                and math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("segment parameters must be finite")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def value(self, t: float) -> float:
        if self.kind is DriverKind.CONSTANT:
            return self.b
        dt = t - self.t_start
        if self.kind is DriverKind.LINEAR:
            return self.b + self.a * dt
        return self.b + self.a * math.sqrt(max(dt, 0.0))


def driver_view(path: BrownianPath, kappa: float, kind: DriverKind) -> list[DriverSegment]:
    """Piecewise driver lambda(t) interpolating sqrt(kappa) * W at the nodes.

    * linear: continuous chords between node values,
    * sqrt: continuous square-root profiles between node values,
    * constant: the step driver that is 0 on [0, h_0/2) and then holds
      sqrt(kappa) * W(t_k) on the half-shifted window around each node
      [t_k - h_{k-1}/2, t_k + h_k/2), capped at the horizon.
    """
    if not (math.isfinite(kappa) and kappa > 0.0):
        raise ValueError("kappa must be positive")
    kind = DriverKind(kind)
    t = path.grid.times
    lam = math.sqrt(kappa) * path.values
    h = np.diff(t)

    if kind is DriverKind.CONSTANT:
        mids = 0.5 * (t[:-1] + t[1:])
        segs = [DriverSegment(kind, float(t[0]), float(mids[0]), 0.0, 0.0)]
        for k in range(1, t.size - 1):
            segs.append(DriverSegment(kind, float(mids[k - 1]), float(mids[k]),
                                      0.0, float(lam[k])))
        segs.append(DriverSegment(kind, float(mids[-1]), float(t[-1]),
                                  0.0, float(lam[-1])))
        return segs

    segs = []
    for k in range(t.size - 1):
        dlam = float(lam[k + 1] - lam[k])
        if kind is DriverKind.LINEAR:
            slope = dlam / float(h[k])
        else:
            slope = dlam / math.sqrt(float(h[k]))
        segs.append(DriverSegment(kind, float(t[k]), float(t[k + 1]),
                                  slope, float(lam[k])))
    return segs


def path_to_csv(path: BrownianPath, stream) -> None:
    """Write the path as CSV with header ``t,w`` (17 significant digits)."""
    stream.write("t,w\n")
    for t, w in zip(path.grid.times, path.values):
        stream.write(f"{t:.17g},{w:.17g}\n")
