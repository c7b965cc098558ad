"""Branch-correct complex arithmetic on the upper half-plane and shared geometry types.

Every flow in this package lives in the closed upper half-plane H = {z : Im z >= 0}.
The single nontrivial primitive is ``sqrt_upper``, the square root branch whose
image is H; everything downstream (drift flows, constant-driver maps, zipper
factors) is built on it.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundaryStateError",
    "HalfPlanePoint",
    "TimeGrid",
    "Trace",
    "require_interior",
    "sqrt_upper",
]

# Points are plain complex numbers; the alias documents intent in signatures.
HalfPlanePoint = complex


class BoundaryStateError(ValueError):
    """An interior-only operation received a point with Im(z) <= 0."""


def sqrt_upper(z):
    """Square root with image in the closed upper half-plane.

    Returns w with w**2 == z and Im(w) >= 0.  For z on the non-negative real
    axis (where both roots are real) the non-negative root is returned, so the
    branch cut sits on [0, inf).  Accepts a complex scalar or a numpy array.

    Raises ValueError on non-finite input.
    """
    if isinstance(z, np.ndarray):
        if not np.all(np.isfinite(z)):
            raise ValueError("sqrt_upper: non-finite input")
        w = np.sqrt(np.asarray(z, dtype=complex))
        return np.where(w.imag < 0.0, -w, w)
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"sqrt_upper: non-finite input {z!r}")
    w = cmath.sqrt(z)
    return -w if w.imag < 0.0 else w


def require_interior(z: complex, what: str = "point") -> complex:
    """Validate that z is finite and strictly inside the upper half-plane."""
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"{what} must be finite, got {z!r}")
    if z.imag <= 0.0:
        raise BoundaryStateError(
            f"{what} must lie strictly inside the upper half-plane, got {z!r}"
        )
    return z


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing partition 0 = t_0 < t_1 < ... < t_n = T.

    Immutable after construction; the times array is stored read-only.
    """

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if not np.all(np.isfinite(t)):
            raise ValueError("grid times must be finite")
        if t[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, n: int, horizon: float = 1.0) -> "TimeGrid":
        """Uniform partition of [0, horizon] into n intervals."""
        if n < 1:
            raise ValueError("need at least one interval")
        if not (math.isfinite(horizon) and horizon > 0.0):
            raise ValueError("horizon must be positive and finite")
        return cls(np.linspace(0.0, horizon, n + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    def mesh(self) -> float:
        """Largest interval width."""
        return float(np.max(np.diff(self.times)))

    def locate(self, t: float) -> int:
        """Index k with t_k <= t < t_{k+1}; the right endpoint maps to n-1.

        Raises ValueError for t outside [0, T].
        """
        horizon = self.horizon
        if not (0.0 <= t <= horizon):
            raise ValueError(f"t = {t} outside [0, {horizon}]")
        if t == horizon:
            return self.n_intervals - 1
        return int(np.searchsorted(self.times, t, side="right")) - 1


@dataclass(frozen=True)
class Trace:
    """A sampled curve: times t_k and points in the closed upper half-plane."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        p = np.array(self.points, dtype=complex)
        if t.ndim != 1 or t.shape != p.shape:
            raise ValueError("times and points must be equal-length 1-d arrays")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise ValueError("trace data must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("trace times must be strictly increasing")
        if np.any(p.imag < 0.0):
            raise ValueError("trace points must lie in the closed upper half-plane")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])
