"""Command-line front end.

Every subcommand writes CSV (default) or JSON to ``--output`` or stdout.
CSV output starts with one ``#`` line holding the run config as JSON; JSON
output is a single object with "config" and "results".  Exit status is 0 on
success, 2 when a verification report finds violations, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.16e" % float(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _config(args) -> dict:
    skip = {"func", "output", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, columns: Sequence[str], rows: Sequence[dict], extra: Optional[dict] = None) -> None:
    cfg = _config(args)
    if args.format == "json":
        body = {"config": cfg, "results": rows}
        if extra:
            body.update(extra)
        text = json.dumps(_jsonable(body), indent=1, sort_keys=False) + "\n"
    else:
        buf = io.StringIO()
        buf.write("# " + json.dumps(_jsonable(cfg), sort_keys=True) + "\r\n")
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        text = buf.getvalue()
    if args.output and args.output != "-":
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text: str, count: int) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    if len(vals) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    return vals


def _threads() -> None:
    raw = os.environ.get("EINSTEIN_THREADS")
    if not raw:
        return
    try:
        want = int(raw)
    except ValueError:
        raise UsageError(f"EINSTEIN_THREADS must be an integer, got {raw!r}")
    if want < 1:
        raise UsageError("EINSTEIN_THREADS must be at least 1")
    import numba

    numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))


def _shot_config(args):
    from .integrator import IntegratorConfig
    from .shooting import ShotConfig

    return ShotConfig(IntegratorConfig(
        eta_max=args.eta_max, rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=args.max_step,
    ), sink_radius=args.sink_radius)


def _params(args):
    from .model import ModelParams

    return ModelParams(args.m)


def _outcome_row(s, oc) -> dict:
    return {
        "s": s, "fate": oc.fate.value, "terminal": oc.terminal.value, "c_count": oc.c_count,
        "turning_eta": oc.turning_eta, "w_intersection_eta": oc.w_intersection_eta,
        "min_dist_p0minus": oc.min_dist_p0minus, "min_dist_p1minus": oc.min_dist_p1minus,
    }


_SHOT_COLUMNS = ["s", "fate", "terminal", "c_count", "turning_eta", "w_intersection_eta",
                 "min_dist_p0minus", "min_dist_p1minus"]


# subcommands


def cmd_critical_points(args) -> int:
    from .critical import catalog, eigen, stability_class

    params = _params(args)
    rows = []
    for pt in catalog(params):
        ed = eigen(pt, params)
        row = {"name": pt.name, "x1": pt.coords.x1, "x2": pt.coords.x2, "y": pt.coords.y, "z": pt.coords.z,
               "class": stability_class(pt, params)}
        for i, ev in enumerate(ed.eigenvalues):
            row[f"eig{i}_re"], row[f"eig{i}_im"] = float(ev.real), float(ev.imag)
        rows.append(row)
    cols = ["name", "x1", "x2", "y", "z", "class"] + [f"eig{i}_{p}" for i in range(4) for p in ("re", "im")]
    _emit(args, cols, rows)
    return EXIT_OK


def cmd_integrate(args) -> int:
    from .integrator import IntegratorConfig, integrate
    from .model import conservation_residual, make_field, project_to_surface

    params = _params(args)
    if args.start:
        start = _floats(args.start, 4)
    elif args.project:
        start = list(project_to_surface(_floats(args.project, 3), params, args.branch))
    else:
        raise UsageError("one of --start or --project is required")
    cfg = IntegratorConfig(
        step=args.step, eta_max=args.eta_max, rel_tol=args.rel_tol, abs_tol=args.abs_tol,
        method=args.method, max_step=args.max_step, drift_monitor=True,
    )
    traj = integrate(make_field(params), start, cfg, monitor=lambda s: conservation_residual(s, params))
    rows = [{"eta": e, "x1": s[0], "x2": s[1], "y": s[2], "z": s[3], "drift": d}
            for e, s, d in zip(traj.eta, traj.states, traj.drift)]
    _emit(args, ["eta", "x1", "x2", "y", "z", "drift"], rows, {"fate": traj.fate})
    return EXIT_OK


def cmd_shoot(args) -> int:
    from .shooting import Family, ShotSpec, shoot

    params = _params(args)
    _, oc = shoot(ShotSpec(Family(args.family), args.s, params, args.epsilon), _shot_config(args))
    _emit(args, _SHOT_COLUMNS, [_outcome_row(args.s, oc)])
    return EXIT_OK


def cmd_scan(args) -> int:
    from .shooting import Family, scan, transitions

    if args.s_steps < 1:
        raise UsageError("--s-steps must be positive")
    params = _params(args)
    grid = np.linspace(args.s_min, args.s_max, args.s_steps + 1)
    res = scan(Family(args.family), grid, params, _shot_config(args), args.epsilon)
    rows = [_outcome_row(s, oc) for s, oc in res]
    trans = [{"s_lo": a, "s_hi": b, "label_lo": list(la), "label_hi": list(lb)} for a, b, la, lb in transitions(res)]
    _emit(args, _SHOT_COLUMNS, rows, {"transitions": trans})
    return EXIT_OK


def cmd_heterocline(args) -> int:
    from .critical import point
    from .shooting import Family, find_heterocline

    params = _params(args)
    lo, hi = _floats(args.bracket, 2)
    target = args.target or ("P0-" if args.family == "gamma" else "P1-")
    het = find_heterocline(Family(args.family), (lo, hi), point(target, params), params,
                           _shot_config(args), tol=args.tol, epsilon=args.epsilon)
    row = {"s_star": het.s_star, "s_lo": het.s_lo, "s_hi": het.s_hi, "min_dist": het.min_dist,
           "iterations": het.iterations, "target": target,
           "label_lo": "%s/%d" % het.lo.label, "label_hi": "%s/%d" % het.hi.label}
    _emit(args, list(row), [row])
    return EXIT_OK


def cmd_omega(args) -> int:
    from .model import ModelParams
    from .winding import PsiConfig, integrate_pi, integrate_psi

    if args.m_max < args.m_min:
        raise UsageError("--m-max must be at least --m-min")
    cfg = PsiConfig(step=args.step, cross_check=not args.no_cross_check)
    rows = []
    for m in range(args.m_min, args.m_max + 1):
        p = ModelParams(m)
        res = integrate_psi(p, cfg)
        pi = integrate_pi(p, step=args.step)
        rows.append({
            "m": m, "constant": res.constant, "omega": res.omega, "limit_class": res.limit_class,
            "theta_star": pi.theta_star, "second_metric_exists": res.omega < 3 * math.pi / 4,
        })
    _emit(args, ["m", "constant", "omega", "limit_class", "theta_star", "second_metric_exists"], rows)
    return EXIT_OK


def cmd_verify_barriers(args) -> int:
    from .barriers import FACES, degenerate_union_check, sample_boundary_inward_check

    params = _params(args)
    faces = args.faces.split(",") if args.faces else list(FACES)
    rep = sample_boundary_inward_check(faces, args.samples, params, rng_seed=args.seed)
    rows = [{"face": f.face, "samples": f.samples, "attempts": f.attempts, "min_inward": f.min_inward,
             "min_flux": f.min_flux, "violations": f.violations} for f in rep.faces.values()]
    extra = {"interior_found": rep.interior_found, "degenerate": rep.degenerate}
    bad = sum(f.violations for f in rep.faces.values())
    if params.m == 1:
        deg = degenerate_union_check(params)
        extra["degenerate_union"] = {"gamma_in_S": deg["gamma_in_S"], "jensen_in_S": deg["jensen_in_S"]}
        bad += (not deg["gamma_in_S"]) + (not deg["jensen_in_S"])
    _emit(args, ["face", "samples", "attempts", "min_inward", "min_flux", "violations"], rows, extra)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_verify_appendix(args) -> int:
    from .appendix import default_kappa_grid, default_m_grid, grid_sign_report

    try:
        nm, nk = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid expects MxK, got {args.grid!r}")
    if nm < 1 or nk < 1:
        raise UsageError("--grid sizes must be positive")
    rep = grid_sign_report(default_m_grid(nm, args.m_max), default_kappa_grid(nk), sylvester=not args.no_sylvester)
    rows = [{"claim": c, "violations": v} for c, v in rep.counts.items()]
    extra = {"nodes": rep.nodes, "m1_F_zero": rep.m1_F_zero, "m1_r_zero": rep.m1_r_zero,
             "violating_nodes": [list(v) for v in rep.violations[:100]]}
    _emit(args, ["claim", "violations"], rows, extra)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_reconstruct(args) -> int:
    from .metric import reconstruct
    from .shooting import Family, ShotSpec, shoot

    params = _params(args)
    traj, oc = shoot(ShotSpec(Family(args.family), args.s, params, args.epsilon), _shot_config(args))
    prof = reconstruct(traj, params)
    rows = [{"t": a, "f1": b, "f2": c} for a, b, c in zip(prof.t, prof.f1, prof.f2)]
    gz = prof.gauge
    _emit(args, ["t", "f1", "f2"], rows, {
        "gauge": {"eta_star": gz.eta_star, "t_star": gz.t_star, "anchored": gz.anchored},
        "fate": oc.fate.value,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="einstein-ode", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--output", "-o", default=None, help="file path; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--csv", dest="csv_path", default=None, help="shorthand for --format csv --output PATH")
    common.add_argument("--json", dest="json_flag", action="store_true", help="shorthand for --format json")
    common.add_argument("--report", choices=("csv", "json"), default=None, help="alias of --format")
    common.add_argument("--seed", type=int, default=0)
    shot = _Parser(add_help=False)
    shot.add_argument("--m", type=int, required=True)
    shot.add_argument("--family", choices=("gamma", "zeta"), required=True)
    shot.add_argument("--epsilon", type=float, default=1e-7)
    shot.add_argument("--eta-max", type=float, default=2000.0)
    shot.add_argument("--rel-tol", type=float, default=1e-10)
    shot.add_argument("--abs-tol", type=float, default=1e-12)
    shot.add_argument("--max-step", type=float, default=math.inf)
    shot.add_argument("--sink-radius", type=float, default=1e-3)

    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("critical-points", parents=[common], help="equilibria with eigen-data")
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(func=cmd_critical_points)

    p = sub.add_parser("integrate", parents=[common], help="integrate one orbit")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--start", help="x1,x2,y,z")
    p.add_argument("--project", help="x1,x2,z; Y is solved from the conservation law")
    p.add_argument("--branch", type=int, choices=(1, -1), default=1)
    p.add_argument("--eta-max", type=float, default=100.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--method", choices=("adaptive", "rk4"), default="adaptive")
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--max-step", type=float, default=math.inf)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("shoot", parents=[common, shot], help="one shot from a seed family")
    p.add_argument("--s", type=float, required=True)
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("scan", parents=[common, shot], help="shots over a uniform parameter grid")
    p.add_argument("--s-min", type=float, required=True)
    p.add_argument("--s-max", type=float, required=True)
    p.add_argument("--s-steps", type=int, default=100)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("heterocline", parents=[common, shot], help="bisect a label change")
    p.add_argument("--bracket", required=True, help="lo,hi")
    p.add_argument("--target", default=None, help="catalog name; P0- for gamma, P1- for zeta by default")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_heterocline)

    p = sub.add_parser("omega", parents=[common], help="limit angle table of the winding criterion")
    p.add_argument("--m-min", type=int, default=2)
    p.add_argument("--m-max", type=int, default=100)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--no-cross-check", action="store_true")
    p.set_defaults(func=cmd_omega)

    p = sub.add_parser("verify-barriers", parents=[common], help="inward-pointing check on the faces of S")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--faces", default=None, help="comma-separated subset of A,B,P")
    p.set_defaults(func=cmd_verify_barriers)

    p = sub.add_parser("verify-appendix", parents=[common], help="exact sign checks over an (m, kappa) grid")
    p.add_argument("--m-max", type=float, default=100.0)
    p.add_argument("--grid", default="200x199")
    p.add_argument("--no-sylvester", action="store_true")
    p.set_defaults(func=cmd_verify_appendix)

    p = sub.add_parser("reconstruct", parents=[common, shot], help="metric profile of one shot")
    p.add_argument("--s", type=float, required=True)
    p.set_defaults(func=cmd_reconstruct)
    return top


def _normalize_output(args) -> None:
    if args.report:
        args.format = args.report
    if args.json_flag:
        args.format = "json"
    if args.csv_path:
        args.format, args.output = "csv", args.csv_path
    for k in ("report", "json_flag", "csv_path"):
        delattr(args, k)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _normalize_output(args)
        _threads()
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
