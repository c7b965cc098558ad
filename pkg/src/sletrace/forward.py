"""Forward Loewner machinery: closed-form constant-driver maps, a general ODE
integrator with swallowing detection, per-segment inverse maps, and zipper-style
trace extraction for piecewise drivers.

The forward flow solves dg/dt = 2 / (g - lambda(t)).  A point is swallowed when
g meets the driver; the integrator detects this and reports the crossing time.
Trace points are recovered by composing per-segment inverse maps (a zipper):
the inverse of each one-segment flow is computed in driver-recentered
coordinates, either in closed form (constant force) or by integrating the
time-reversed ODE, which runs away from the singularity and is stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .brownian import BrownianPath, DriverKind, DriverSegment, driver_view
from .halfplane import Trace, require_interior, sqrt_upper

__all__ = [
    "SwallowReport",
    "compose_inverse_maps",
    "constant_backward_map",
    "constant_forward_map",
    "integrate_forward",
    "inverse_segment_map",
    "linear_driver_reference_curve",
    "trace_interpolated_driver",
]

# Baseline substeps per unit time; near the driver the move-fraction rule
# below takes over.  Calibrated so constant-driver flows reproduce the closed
# form to well under 1e-8.
DEFAULT_SUBSTEPS_PER_UNIT = 512

# Hard cap: no step may move |g - lambda| by more than 10% of itself.
_MAX_MOVE_FRACTION = 0.1
_STEP_LIMIT = 20_000_000


def _step_size(remaining: float, dist: float, substeps_per_unit: int) -> float:
    # Both the baseline and the near-driver rule scale with the substep knob,
    # so halving substeps scales every step and the integrator self-converges
    # at the one-step method's order.  A move of f*dist costs dt = f*dist^2/2.
    fraction = min(_MAX_MOVE_FRACTION, 2.0 / substeps_per_unit)
    return min(remaining, 1.0 / substeps_per_unit, 0.5 * fraction * dist * dist)


def constant_forward_map(z: complex, force: float, t: float) -> complex:
    """Forward flow under a constant driver: force + sqrt((z - force)^2 + 4t)."""
    z = require_interior(z)
    if not (math.isfinite(force) and math.isfinite(t) and t >= 0.0):
        raise ValueError("need finite force and t >= 0")
    return force + sqrt_upper((z - force) ** 2 + 4.0 * t)


def constant_backward_map(z: complex, force: float, duration: float) -> complex:
    """Backward flow under a constant driver: force + sqrt((z - force)^2 - 4T).

    Inverse of ``constant_forward_map`` with the same force and duration.
    """
    z = require_interior(z)
    if not (math.isfinite(force) and math.isfinite(duration) and duration >= 0.0):
        raise ValueError("need finite force and duration >= 0")
    return force + sqrt_upper((z - force) ** 2 - 4.0 * duration)


@dataclass(frozen=True)
class SwallowReport:
    """Outcome of a forward integration.

    ``time`` is the estimated swallowing time (None when not swallowed);
    ``final`` is the state at the end of integration or at the crossing.
    """

    swallowed: bool
    time: float | None
    final: complex


def _validate_chain(segments) -> float:
    if not segments:
        raise ValueError("need at least one driver segment")
    if segments[0].t_start != 0.0:
        raise ValueError("driver segments must start at t = 0")
    for prev, cur in zip(segments, segments[1:]):
        if prev.t_end != cur.t_start:
            raise ValueError("driver segments must tile the horizon without gaps")
    return segments[-1].t_end


def _rk4_forward(g: complex, t: float, dt: float, lam) -> complex:
    k1 = 2.0 / (g - lam(t))
    half = t + 0.5 * dt
    k2 = 2.0 / (g + 0.5 * dt * k1 - lam(half))
    k3 = 2.0 / (g + 0.5 * dt * k2 - lam(half))
    k4 = 2.0 / (g + dt * k3 - lam(t + dt))
    return g + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _bisect_crossing(g: complex, t: float, dt: float, lam, threshold: float):
    # Earliest time in (t, t+dt] where |g - lambda| drops below the threshold,
    # located by bisection on the step fraction.
    lo, hi = 0.0, dt
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        g_mid = _rk4_forward(g, t, mid, lam)
        if abs(g_mid - lam(t + mid)) < threshold:
            hi = mid
        else:
            lo = mid
    g_hi = _rk4_forward(g, t, hi, lam)
    return t + hi, g_hi


def integrate_forward(z: complex, segments, substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT) -> SwallowReport:
    """Integrate dg/dt = 2/(g - lambda(t)) across a segment chain tiling [0, T].

    Classical RK4 with sub-stepping: each step moves |g - lambda| by at most a
    small fraction of its current value (never more than 10%), on top of the
    uniform ``substeps_per_unit`` baseline.  Swallowing is declared when
    |g - lambda| falls below 1e-9 * (1 + |z|) and the crossing time is located
    by bisection inside the offending step.
    """
    z = require_interior(z)
    if substeps_per_unit < 1:
        raise ValueError("substeps_per_unit must be >= 1")
    _validate_chain(segments)
    threshold = 1e-9 * (1.0 + abs(z))
    g = z
    steps = 0
    for seg in segments:
        t = seg.t_start
        while True:
            remaining = seg.t_end - t
            if remaining <= 0.0:
                break
            dist = abs(g - seg.value(t))
            if dist < threshold:
                return SwallowReport(True, t, g)
            dt = _step_size(remaining, dist, substeps_per_unit)
            g_next = _rk4_forward(g, t, dt, seg.value)
            t_next = seg.t_end if dt == remaining else t + dt
            if abs(g_next - seg.value(t_next)) < threshold:
                t_cross, g_cross = _bisect_crossing(g, t, dt, seg.value, threshold)
                return SwallowReport(True, t_cross, g_cross)
            g, t = g_next, t_next
            steps += 1
            if steps > _STEP_LIMIT:
                raise RuntimeError("forward integration exceeded the step limit")
    return SwallowReport(False, None, g)


def inverse_segment_map(w: complex, segment: DriverSegment,
                        substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT) -> complex:
    """Inverse of one segment's forward flow, in driver-recentered coordinates.

    Input w is relative to the driver value at the segment's right endpoint;
    the output is relative to the value at its left endpoint.  Constant
    segments use the closed backward form sqrt(w^2 - 4*duration); other kinds
    integrate the time-reversed flow dz/ds = 2/(z - mu(s)) from s = duration
    down to 0, where mu is the recentered driver.  Reverse time moves away
    from the singularity, so the integration is stable for any interior w.
    """
    w = require_interior(w)
    duration = segment.duration
    if segment.kind is DriverKind.CONSTANT:
        return sqrt_upper(w * w - 4.0 * duration)

    v_end = segment.value(segment.t_end)
    v_start = segment.value(segment.t_start)

    def mu(s: float) -> float:
        return segment.value(segment.t_start + s) - v_end

    z = w
    s = duration
    steps = 0
    while s > 0.0:
        dist = abs(z - mu(s))
        dt = _step_size(s, dist, substeps_per_unit)
        k1 = 2.0 / (z - mu(s))
        half = s - 0.5 * dt
        k2 = 2.0 / (z - 0.5 * dt * k1 - mu(half))
        k3 = 2.0 / (z - 0.5 * dt * k2 - mu(half))
        k4 = 2.0 / (z - dt * k3 - mu(s - dt))
        z = z - dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        s = 0.0 if dt == s else s - dt
        steps += 1
        if steps > _STEP_LIMIT:
            raise RuntimeError("inverse map integration exceeded the step limit")
    return z + (v_end - v_start)


def compose_inverse_maps(segments, w: complex,
                         substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT) -> complex:
    """Zipper composition: pull w back through every segment, last to first.

    w is relative to the driver value at the final time of the chain.  Driver
    jumps at segment boundaries become translations between the adjacent
    recentered frames.  The result is in absolute coordinates (the first
    segment's left-end driver value is added back).
    """
    _validate_chain(segments)
    z = w
    for j in range(len(segments) - 1, -1, -1):
        seg = segments[j]
        z = inverse_segment_map(z, seg, substeps_per_unit)
        if j > 0:
            z += seg.value(seg.t_start) - segments[j - 1].value(seg.t_start)
    return z + segments[0].value(segments[0].t_start)


def _prefix_segments(segments, t: float) -> list[DriverSegment]:
    # The sub-chain tiling [0, t]; the segment containing t is truncated.
    out = []
    for seg in segments:
        if seg.t_end <= t:
            out.append(seg)
        elif seg.t_start < t:
            out.append(replace(seg, t_end=t))
        else:
            break
    return out


def trace_interpolated_driver(path: BrownianPath, kappa: float, kind: DriverKind,
                              substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT) -> Trace:
    """Forward trace at the grid nodes for an interpolated Brownian driver.

    The driver is the chosen interpolation (constant / linear / sqrt profile)
    of sqrt(kappa) * W.  For every node t_k the trace point is the zipper
    composition of the per-segment inverse maps applied to the tip of the most
    recent segment.  The tip is estimated at heights y and y/2 above the base
    (y = sqrt(segment duration)/100) and Richardson-extrapolated, removing the
    O(y) bias.  Requires a uniform grid.
    """
    widths = path.grid.widths()
    if np.max(widths) - np.min(widths) > 1e-12 * np.max(widths):
        raise ValueError("trace extraction requires a uniform grid")
    segments = driver_view(path, kappa, kind)
    t = path.grid.times
    points = np.empty(t.size, dtype=complex)
    points[0] = 0.0 + 0.0j
    for k in range(1, t.size):
        prefix = _prefix_segments(segments, float(t[k]))
        y_tip = math.sqrt(prefix[-1].duration) / 100.0
        f1 = compose_inverse_maps(prefix, complex(0.0, y_tip), substeps_per_unit)
        f2 = compose_inverse_maps(prefix, complex(0.0, 0.5 * y_tip), substeps_per_unit)
        g = 2.0 * f2 - f1
        if g.imag < 0.0:
            # extrapolation roundoff can land a base-adjacent tip a hair below
            # the axis; clamp, never fold
            g = complex(g.real, 0.0)
        points[k] = g
    return Trace(t, points)


def linear_driver_reference_curve(rho: float) -> complex:
    """Point on the exact trace of the unit-slope linear driver lambda(t) = t.

    The curve is {2 - 2*rho*cot(rho) + 2i*rho : rho in (0, pi)}, traversed
    monotonically from the base at 0 toward its asymptotic height 2*pi.
    """
    if not (math.isfinite(rho) and 0.0 < rho < math.pi):
        raise ValueError("rho must lie in (0, pi)")
    return complex(2.0 - 2.0 * rho * math.cos(rho) / math.sin(rho), 2.0 * rho)
