"""Convergence laboratory: trace distances, same-realization multiresolution
error studies, empirical order fitting, theoretical rate-function evaluation,
and Monte Carlo moment validation.

The study machinery compares a scheme against itself across resolutions on a
single Brownian realization: the reference path is grown from the coarsest
grid by nested bridge refinement, so every coarse grid is an exact restriction
of the reference grid and all resolutions see the same noise.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .brownian import refine_all_midpoints, sample_path
from .halfplane import TimeGrid, Trace
from .splitting import SchemeConfig, SchemeKind, auto_y0, nv_endpoint_ensemble, run_scheme

__all__ = [
    "BoundParams",
    "ErrorReport",
    "MomentEstimate",
    "StudyResult",
    "convergence_study",
    "fit_order",
    "lp_distance",
    "phi1",
    "phi2",
    "predicted_second_moment",
    "second_moment_stat",
    "sup_distance",
    "theorem_mesh_bound",
    "theorem_regime_steps",
]


# ---------------------------------------------------------------------------
# trace distances

def _check_comparable(a: Trace, b: Trace) -> None:
    if a.times[0] != b.times[0] or a.times[-1] != b.times[-1]:
        raise ValueError("traces must span the same horizon")


def _interp(trace: Trace, ts: np.ndarray) -> np.ndarray:
    re = np.interp(ts, trace.times, trace.points.real)
    im = np.interp(ts, trace.times, trace.points.imag)
    return re + 1j * im


def sup_distance(a: Trace, b: Trace) -> float:
    """Sup-norm distance between two traces on a common horizon.

    Both traces are piecewise-linear interpolated in time; on the union grid
    the pointwise difference is linear per interval, so its modulus is convex
    there and the supremum is attained at union nodes.  The value is exact for
    the interpolants.
    """
    _check_comparable(a, b)
    ts = np.union1d(a.times, b.times)
    return float(np.max(np.abs(_interp(a, ts) - _interp(b, ts))))


def _oversample(ts: np.ndarray, factor: int) -> np.ndarray:
    offsets = np.arange(factor) / factor
    fine = ts[:-1, None] + np.diff(ts)[:, None] * offsets[None, :]
    return np.append(fine.ravel(), ts[-1])


def lp_distance(a: Trace, b: Trace, p: float) -> float:
    """Normalized L^p distance ((1/T) * integral |a - b|^p dt)^(1/p), p >= 2.

    Composite trapezoid on the union grid with 16x oversampling per interval.
    """
    if not p >= 2.0:
        raise ValueError("p must be >= 2")
    _check_comparable(a, b)
    ts = np.union1d(a.times, b.times)
    fine = _oversample(ts, 16)
    diff = np.abs(_interp(a, fine) - _interp(b, fine)) ** p
    total = np.trapezoid(diff, fine)
    span = float(ts[-1] - ts[0])
    return float((total / span) ** (1.0 / p))


# ---------------------------------------------------------------------------
# theoretical rate functions

@dataclass(frozen=True)
class BoundParams:
    """Free constants of the rate functions.

    beta1 and eps0 live in (0, 1); the rate functions only assert their
    existence, so both default to 1/2.  The subpower factor is
    phi(x) = log(x + e)^alpha (alpha = 0 gives phi == 1).  eps_n stands in
    for an unknowable almost-sure tail and is a user-supplied placeholder.
    """

    kappa: float = 2.0
    beta1: float = 0.5
    eps0: float = 0.5
    subpower_alpha: float = 1.0
    eps_n: float = 0.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0:
            raise ValueError("beta1 must lie in (0, 1)")
        if not 0.0 < self.eps0 < 1.0:
            raise ValueError("eps0 must lie in (0, 1)")
        if not self.subpower_alpha >= 0.0:
            raise ValueError("subpower_alpha must be >= 0")
        if not self.kappa > 0.0:
            raise ValueError("kappa must be positive")
        if not self.eps_n >= 0.0:
            raise ValueError("eps_n must be >= 0")
        if not (self.c2 > 0.0 and self.c3 > 0.0 and self.c4 > 0.0):
            raise ValueError("c2, c3, c4 must be positive")

    def subpower(self, x: float) -> float:
        return math.log(x + math.e) ** self.subpower_alpha


def phi1(n: int, params: BoundParams) -> float:
    """Sup-norm rate envelope at resolution n (non-increasing, -> 0)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (2.0 * params.subpower(math.sqrt(n))
            / ((1.0 - params.beta1) * n ** (0.5 * (1.0 - params.beta1)))
            + 3.0 / n ** (0.25 * (1.0 - params.eps0))
            + (4.0 * n + 1.0) ** -0.5
            + 2.0 / math.sqrt(n)
            + n ** -0.25)


def phi2(n: int, params: BoundParams) -> float:
    """Failure-probability envelope at resolution n.

    All explicit terms vanish as n grows; the 3*eps_n term is an additive
    placeholder supplied by the caller.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return (1.0 / n
            + params.c2 / n ** 2
            + params.c4 / n ** (0.5 * params.c3)
            + 2.0 * (4.0 * n + 1.0) ** 3 * math.exp(-(4.0 * n + 1.0) / (2.0 * params.kappa))
            + 2.0 * math.exp(-math.sqrt(n) / (2.0 * params.kappa))
            + 3.0 * params.eps_n)


def theorem_mesh_bound(n: int) -> float:
    """Mesh restriction min(1/n, (4n+1)^-3) of the guarantee regime."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return min(1.0 / n, (4.0 * n + 1.0) ** -3)


def theorem_regime_steps(n: int) -> int:
    """Uniform step count meeting the guarantee-regime mesh at resolution n.

    Rounded up to the next power of two so theorem-regime grids stay nested
    under dyadic bridge refinement.  Grows like (4n+1)^3, so this is only
    practical for very small n; ordinary studies skip the restriction.
    """
    raw = max(n, math.ceil((4 * n + 1) ** 3))
    return 1 << max(0, (raw - 1).bit_length())


# ---------------------------------------------------------------------------
# same-realization convergence study

@dataclass(frozen=True)
class ErrorReport:
    """Per-resolution study row: median errors across seeds."""

    n: int
    sup_error: float
    lp_error: dict
    wall_seconds: float

    def __post_init__(self):
        if self.sup_error < 0.0:
            raise ValueError("sup_error must be >= 0")


@dataclass(frozen=True)
class StudyResult:
    """Study output: per-resolution reports plus the fitted empirical order."""

    reports: list
    fitted_order: float
    order_stderr: float
    intercept: float
    r_squared: float

    @property
    def order_ci95(self) -> tuple:
        half = 1.96 * self.order_stderr
        return (self.fitted_order - half, self.fitted_order + half)


def fit_order(ns, errors) -> tuple:
    """OLS fit of log(error) against log(n): returns (order, stderr, intercept, r2).

    The order is the negated slope.  Zero or non-finite errors are excluded;
    with fewer than two usable points everything is NaN.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = np.isfinite(errors) & (errors > 0.0)
    if mask.sum() < 2:
        return (math.nan, math.nan, math.nan, math.nan)
    x = np.log(ns[mask])
    y = np.log(errors[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = x.size - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        stderr = math.nan
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return (-float(slope), stderr, float(intercept), r2)


def _validate_ladder(resolutions, reference_n: int) -> list:
    res = sorted(set(int(r) for r in resolutions))
    if not res:
        raise ValueError("need at least one study resolution")
    if any(r < 1 for r in res):
        raise ValueError("resolutions must be positive")
    base = res[0]
    for r in res + [int(reference_n)]:
        q, rem = divmod(r, base)
        if rem != 0 or q & (q - 1):
            raise ValueError(
                f"resolution ladder must be dyadic over its coarsest level; "
                f"{r} is not {base} times a power of two")
    if reference_n < res[-1]:
        raise ValueError("reference resolution must be at least the finest study resolution")
    return res


def convergence_study(kappa: float, seeds, resolutions, reference_n: int,
                      scheme: SchemeKind = SchemeKind.NV,
                      p_values=(2.0, 4.0), horizon: float = 1.0,
                      theorem_regime: bool = False,
                      max_workers: int | None = None) -> StudyResult:
    """Same-realization error ladder against a fine reference.

    For every seed one Brownian path is grown from the coarsest grid to the
    reference grid by nested bridge refinement, so each study resolution
    consumes an exact restriction of the reference path.  Each resolution n is
    run with its coupled start height y = n^(-1/2), errors are measured
    against the reference trace on the same realization, and per-resolution
    medians across seeds are reported together with a least-squares order fit
    of the sup errors.

    ``theorem_regime`` replaces every grid with one fine enough for the
    guarantee-regime mesh restriction (practical only for tiny n).  Results
    are deterministic and independent of ``max_workers``.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    res = _validate_ladder(resolutions, reference_n)
    steps_of = theorem_regime_steps if theorem_regime else (lambda n: n)
    all_levels = sorted(set(steps_of(n) for n in res + [int(reference_n)]))
    _validate_ladder(all_levels, all_levels[-1])

    def scheme_config(n: int) -> SchemeConfig:
        return SchemeConfig(kappa=kappa, y0=auto_y0(n), horizon=horizon, scheme=scheme)

    def run_seed(seed: int) -> dict:
        paths = {}
        path = sample_path(TimeGrid.uniform(all_levels[0], horizon), seed)
        paths[all_levels[0]] = path
        while path.grid.n_intervals < all_levels[-1]:
            path = refine_all_midpoints(path)
            paths[path.grid.n_intervals] = path
        reference = run_scheme(scheme_config(int(reference_n)),
                               paths[steps_of(int(reference_n))])
        rows = {}
        for n in res:
            start = time.perf_counter()
            trace = run_scheme(scheme_config(n), paths[steps_of(n)])
            sup = sup_distance(trace, reference)
            lps = {p: lp_distance(trace, reference, p) for p in p_values}
            rows[n] = (sup, lps, time.perf_counter() - start)
        return rows

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_seed = list(pool.map(run_seed, seeds))
    else:
        per_seed = [run_seed(s) for s in seeds]

    reports = []
    for n in res:
        sups = [per_seed[i][n][0] for i in range(len(seeds))]
        lps = {p: float(np.median([per_seed[i][n][1][p] for i in range(len(seeds))]))
               for p in p_values}
        secs = float(sum(per_seed[i][n][2] for i in range(len(seeds))))
        reports.append(ErrorReport(n=n, sup_error=float(np.median(sups)),
                                   lp_error=lps, wall_seconds=secs))

    order, stderr, intercept, r2 = fit_order([r.n for r in reports],
                                             [r.sup_error for r in reports])
    return StudyResult(reports=reports, fitted_order=order, order_stderr=stderr,
                       intercept=intercept, r_squared=r2)


# ---------------------------------------------------------------------------
# moment validation

@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of E[Z_T^2] with componentwise standard errors."""

    mean: complex
    se_real: float
    se_imag: float
    samples: int


def predicted_second_moment(kappa: float, y0: float, horizon: float = 1.0) -> complex:
    """Exact E[Z_t^2] = -y0^2 + (kappa - 4) t, preserved by the scheme.

    Follows from expanding one step: with A = sqrt(Z^2 - 2h) and
    C = sqrt((A + sqrt(kappa) dB)^2 - 2h),
    C^2 = Z^2 - 4h + 2 sqrt(kappa) dB A + kappa dB^2, and the cross term
    vanishes in expectation, so E[Z^2] gains (kappa - 4) h per step.
    """
    return complex(-y0 * y0 + (kappa - 4.0) * horizon, 0.0)


def second_moment_stat(kappa: float, y0: float, n: int, samples: int,
                       seed: int, horizon: float = 1.0) -> MomentEstimate:
    """Monte Carlo mean of Z_T^2 over independent scheme paths."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    z = nv_endpoint_ensemble(kappa, y0, n, samples, seed, horizon)
    sq = z * z
    mean = complex(np.mean(sq))
    se_real = float(np.std(sq.real, ddof=1) / math.sqrt(samples))
    se_imag = float(np.std(sq.imag, ddof=1) / math.sqrt(samples))
    return MomentEstimate(mean=mean, se_real=se_real, se_imag=se_imag, samples=samples)
