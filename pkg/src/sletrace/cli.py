"""Command-line front end: run schemes, compare them, run convergence studies,
validate moments, and evaluate the theoretical rate functions.

Every run writes its manifest (command, resolved parameters, io, and a
normalized argv) into the output metadata, so any output can be reproduced
byte-for-byte by re-running the recorded argv.  Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .brownian import DriverKind, sample_path, zero_path
from .forward import DEFAULT_SUBSTEPS_PER_UNIT, trace_interpolated_driver
from .halfplane import TimeGrid, Trace
from .lab import (
    BoundParams,
    StudyResult,
    convergence_study,
    lp_distance,
    phi1,
    phi2,
    predicted_second_moment,
    second_moment_stat,
    sup_distance,
)
from .splitting import (
    SchemeConfig,
    SchemeKind,
    adaptive_run,
    auto_y0,
    run_scheme,
)

__all__ = ["build_parser", "main"]

_BACKWARD_SCHEMES = {
    "nv": SchemeKind.NV,
    "euler-ref": SchemeKind.EULER_REFERENCE,
}
_FORWARD_SCHEMES = {
    "constant": DriverKind.CONSTANT,
    "linear": DriverKind.LINEAR,
    "sqrt": DriverKind.SQRT,
}
_STUDY_SCHEMES = {
    "nv": SchemeKind.NV,
    "euler-ref": SchemeKind.EULER_REFERENCE,
    "constant": SchemeKind.PIECEWISE_CONSTANT,
}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _int_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sletrace",
        description="Simulate SLE traces and measure scheme convergence.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, schemes):
        p.add_argument("--kappa", type=float, required=True, help="driver strength kappa > 0")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--scheme", choices=sorted(schemes), default="nv")
        p.add_argument("--horizon", type=float, default=1.0)
        p.add_argument("--out", required=True, help="output file")
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("trace", help="run one scheme and write the trace")
    add_common(p, list(_BACKWARD_SCHEMES) + list(_FORWARD_SCHEMES))
    p.add_argument("--n", type=int, required=True, help="number of grid intervals")
    p.add_argument("--y0", default="auto",
                   help="start height for backward schemes, or 'auto' for n^(-1/2)")
    p.add_argument("--tol", type=float, default=None,
                   help="adaptive step tolerance (nv scheme only)")
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--zero-noise", action="store_true", help="use the zero driver path")
    p.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS_PER_UNIT,
                   help="baseline substeps per unit time for forward integration")

    p = sub.add_parser("compare", help="run two schemes on one realization and report distances")
    add_common(p, list(_BACKWARD_SCHEMES) + list(_FORWARD_SCHEMES))
    p.add_argument("--against", choices=sorted(list(_BACKWARD_SCHEMES) + list(_FORWARD_SCHEMES)),
                   required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--y0", default="auto")
    p.add_argument("--p", type=float, default=4.0, help="order of the L^p distance (p >= 2)")
    p.add_argument("--zero-noise", action="store_true")
    p.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS_PER_UNIT)

    p = sub.add_parser("study", help="same-realization multiresolution convergence study")
    add_common(p, _STUDY_SCHEMES)
    p.add_argument("--resolutions", type=_int_list, required=True,
                   help="comma-separated dyadic ladder, e.g. 64,128,256")
    p.add_argument("--reference", type=int, required=True)
    p.add_argument("--seeds", type=_int_list, default=None,
                   help="explicit comma-separated seed list")
    p.add_argument("--num-seeds", type=int, default=None,
                   help="use seeds seed, seed+1, ... seed+num-1")
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: machine parallelism); results do not depend on it")
    p.add_argument("--theorem-regime", action="store_true",
                   help="use grids meeting the guarantee-regime mesh bound (tiny n only)")
    p.add_argument("--phi1", action="store_true", help="add a phi1 column to the report")
    _add_bound_args(p)

    p = sub.add_parser("moments", help="Monte Carlo second-moment check of the endpoint")
    add_common(p, ["nv"])
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000)

    p = sub.add_parser("bounds", help="evaluate the rate functions phi1 and phi2")
    p.add_argument("--n-values", type=_int_list, required=True)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_bound_args(p)

    return parser


def _add_bound_args(p) -> None:
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--eps0", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0, help="subpower exponent")
    p.add_argument("--epsn", type=float, default=0.0,
                   help="placeholder tail term (unknowable; defaults to 0)")
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--c3", type=float, default=1.0)
    p.add_argument("--c4", type=float, default=1.0)


def _resolve_y0(raw, n: int) -> float:
    if isinstance(raw, str) and raw.strip().lower() == "auto":
        return auto_y0(n)
    return float(raw)


def _bound_params(args) -> BoundParams:
    return BoundParams(kappa=args.kappa, beta1=args.beta1, eps0=args.eps0,
                       subpower_alpha=args.alpha, eps_n=args.epsn,
                       c2=args.c2, c3=args.c3, c4=args.c4)


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _sidecar_path(out: str) -> str:
    p = Path(out)
    if p.suffix == ".csv":
        return str(p.with_suffix(".json"))
    return str(p) + ".json"


def _emit(out: str, fmt: str, header: list, rows: list, manifest: dict, extra: dict) -> None:
    """Write rows as CSV plus a JSON sidecar, or as one JSON document."""
    if fmt == "csv":
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
        _write(out, "\n".join(lines) + "\n")
        sidecar = {"manifest": manifest, "output": os.path.basename(out),
                   "columns": header, "rows_written": len(rows)}
        sidecar.update(extra)
        _write(_sidecar_path(out), json.dumps(sidecar, indent=2) + "\n")
    else:
        doc = {"manifest": manifest, "columns": header, "rows": rows}
        doc.update(extra)
        _write(out, json.dumps(doc, indent=2) + "\n")


def _trace_rows(trace: Trace) -> list:
    return [[float(t), float(z.real), float(z.imag)]
            for t, z in zip(trace.times, trace.points)]


def _make_path(args, n: int):
    grid = TimeGrid.uniform(n, args.horizon)
    if getattr(args, "zero_noise", False):
        return zero_path(grid, args.seed)
    return sample_path(grid, args.seed)


def _run_one_scheme(args, parser, name: str, path, y0raw):
    """Run one named scheme on a prepared path; returns (trace, flagged)."""
    n = path.grid.n_intervals
    if name in _FORWARD_SCHEMES:
        trace = trace_interpolated_driver(path, args.kappa, _FORWARD_SCHEMES[name],
                                          substeps_per_unit=args.substeps)
        return trace, None
    kind = _BACKWARD_SCHEMES[name]
    tol = getattr(args, "tol", None)
    if tol is not None and kind is not SchemeKind.NV:
        parser.error("--tol is only supported for the nv scheme")
    config = SchemeConfig(kappa=args.kappa, y0=_resolve_y0(y0raw, n),
                          horizon=args.horizon, scheme=kind, tolerance=tol,
                          max_refine_depth=args.max_depth if hasattr(args, "max_depth") else 20)
    if tol is not None:
        result = adaptive_run(config, path)
        return result.trace, list(result.flagged)
    return run_scheme(config, path), None


def _manifest(args, command: str, params: dict) -> dict:
    argv = [command]
    for key, value in params.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif value is not None:
            if isinstance(value, list):
                argv.extend([flag, ",".join(str(v) for v in value)])
            else:
                argv.extend([flag, str(value)])
    argv.extend(["--out", args.out, "--format", args.format])
    return {"command": command, "params": params,
            "io": {"out": args.out, "format": args.format}, "argv": argv}


def _cmd_trace(args, parser) -> int:
    params = {"kappa": args.kappa, "n": args.n, "seed": args.seed, "y0": args.y0,
              "scheme": args.scheme, "horizon": args.horizon,
              "zero_noise": args.zero_noise, "substeps": args.substeps,
              "tol": args.tol, "max_depth": args.max_depth}
    manifest = _manifest(args, "trace", params)
    path = _make_path(args, args.n)
    trace, flagged = _run_one_scheme(args, parser, args.scheme, path, args.y0)
    extra = {} if flagged is None else {"flagged_steps": flagged}
    _emit(args.out, args.format, ["t", "re", "im"], _trace_rows(trace), manifest, extra)
    return 0


def _cmd_compare(args, parser) -> int:
    if args.p < 2.0:
        parser.error("--p must be >= 2")
    params = {"kappa": args.kappa, "n": args.n, "seed": args.seed, "y0": args.y0,
              "scheme": args.scheme, "against": args.against, "p": args.p,
              "horizon": args.horizon, "zero_noise": args.zero_noise,
              "substeps": args.substeps}
    manifest = _manifest(args, "compare", params)
    path = _make_path(args, args.n)
    trace_a, _ = _run_one_scheme(args, parser, args.scheme, path, args.y0)
    trace_b, _ = _run_one_scheme(args, parser, args.against, path, args.y0)
    sup = sup_distance(trace_a, trace_b)
    l2 = lp_distance(trace_a, trace_b, 2.0)
    lp = lp_distance(trace_a, trace_b, args.p)
    _emit(args.out, args.format, ["sup_err", "l2_err", "lp_err"],
          [[sup, l2, lp]], manifest, {"p": args.p})
    return 0


def _study_seeds(args, parser) -> list:
    if args.seeds is not None and args.num_seeds is not None:
        parser.error("give either --seeds or --num-seeds, not both")
    if args.seeds is not None:
        if not args.seeds:
            parser.error("--seeds must not be empty")
        return args.seeds
    count = args.num_seeds if args.num_seeds is not None else 1
    if count < 1:
        parser.error("--num-seeds must be >= 1")
    return [args.seed + i for i in range(count)]


def _cmd_study(args, parser) -> int:
    seeds = _study_seeds(args, parser)
    params = {"kappa": args.kappa, "resolutions": args.resolutions,
              "reference": args.reference, "seeds": seeds, "scheme": args.scheme,
              "p": args.p, "horizon": args.horizon,
              "theorem_regime": args.theorem_regime, "phi1": args.phi1,
              "beta1": args.beta1, "eps0": args.eps0, "alpha": args.alpha,
              "epsn": args.epsn, "c2": args.c2, "c3": args.c3, "c4": args.c4}
    manifest = _manifest(args, "study", params)
    threads = args.threads if args.threads is not None else os.cpu_count()
    try:
        result = convergence_study(
            kappa=args.kappa, seeds=seeds, resolutions=args.resolutions,
            reference_n=args.reference, scheme=_STUDY_SCHEMES[args.scheme],
            p_values=(2.0, args.p), horizon=args.horizon,
            theorem_regime=args.theorem_regime, max_workers=threads)
    except ValueError as exc:
        parser.error(str(exc))

    header = ["n", "sup_err", "l2_err", "lp_err", "seconds"]
    bound = _bound_params(args) if args.phi1 else None
    if bound is not None:
        header.append("phi1")
    rows = []
    for report in result.reports:
        row = [report.n, report.sup_error, report.lp_error[2.0],
               report.lp_error[args.p], report.wall_seconds]
        if bound is not None:
            row.append(phi1(report.n, bound))
        rows.append(row)
    extra = {
        "p": args.p,
        "fitted_order": result.fitted_order,
        "order_stderr": result.order_stderr,
        "order_ci95": list(result.order_ci95),
        "r_squared": result.r_squared,
    }
    _emit(args.out, args.format, header, rows, manifest, extra)
    return 0


def _cmd_moments(args, parser) -> int:
    params = {"kappa": args.kappa, "y0": args.y0, "n": args.n,
              "samples": args.samples, "seed": args.seed, "horizon": args.horizon,
              "scheme": args.scheme}
    manifest = _manifest(args, "moments", params)
    est = second_moment_stat(args.kappa, args.y0, args.n, args.samples,
                             args.seed, args.horizon)
    predicted = predicted_second_moment(args.kappa, args.y0, args.horizon)
    z_re = (est.mean.real - predicted.real) / est.se_real if est.se_real > 0 else float("nan")
    z_im = (est.mean.imag - predicted.imag) / est.se_imag if est.se_imag > 0 else float("nan")
    header = ["mean_re", "mean_im", "se_re", "se_im",
              "predicted_re", "predicted_im", "z_re", "z_im"]
    rows = [[est.mean.real, est.mean.imag, est.se_real, est.se_imag,
             predicted.real, predicted.imag, z_re, z_im]]
    _emit(args.out, args.format, header, rows, manifest, {"samples": est.samples})
    return 0


def _cmd_bounds(args, parser) -> int:
    if not args.n_values:
        parser.error("--n-values must not be empty")
    params = {"n_values": args.n_values, "kappa": args.kappa, "beta1": args.beta1,
              "eps0": args.eps0, "alpha": args.alpha, "epsn": args.epsn,
              "c2": args.c2, "c3": args.c3, "c4": args.c4}
    manifest = _manifest(args, "bounds", params)
    bound = _bound_params(args)
    rows = [[n, phi1(n, bound), phi2(n, bound)] for n in args.n_values]
    _emit(args.out, args.format, ["n", "phi1", "phi2"], rows, manifest,
          {"eps_n_is_placeholder": True})
    return 0


_DISPATCH = {
    "trace": _cmd_trace,
    "compare": _cmd_compare,
    "study": _cmd_study,
    "moments": _cmd_moments,
    "bounds": _cmd_bounds,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args, parser)
    except SystemExit:
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"sletrace: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
