"""Command-line front end.

Exit codes: 0 success, 1 failed acceptance criteria, 2 usage or bad input,
3 solver failure, 4 geometry error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, grid as gridmod, norms
from .dilatation import john_ellipse
from .errors import GeometryError, GridError, SolverError
from .gridio import load_grid, save_grid
from .modulus import annulus_modulus, dual_modulus, modulus, solve_dirichlet
from .network import DEFAULT_TOL
from .reciprocal import CSV_HEADER, audit
from .uniformize import (change_of_variables_check, conjugate, degree_check,
                         dividing_modulus_check, dyadic_mass_check)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER, EXIT_GEOMETRY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _quad(grid, ints):
    if ints is None:
        return gridmod.Quad.full(grid)
    if len(ints) != 4:
        raise UsageError("--quad needs four integers i0,i1,j0,j1")
    q = gridmod.Quad(*ints)
    q.check_inside(grid)
    return q


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("MODSURF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"MODSURF_THREADS must be an integer, got {env!r}") from None
    return 1


def _emit(args, text: str) -> None:
    out = getattr(args, "output", None)
    if out and args.command != "generate":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def cmd_generate(args) -> int:
    if not args.output:
        raise UsageError("generate needs -o PATH")
    kind = args.generator
    if kind == "cantor":
        if args.depth is None or args.a is None:
            raise UsageError("cantor needs --depth and --a")
        g = gridmod.make_cantor_weight(args.depth, args.a, args.floor_eps, args.n - 1 if args.n else None)
    else:
        n = args.n or 65
        rows = args.rows or n
        cols = args.cols or n
        h = args.h if args.h is not None else 1.0 / (max(rows, cols) - 1)
        if kind == "euclidean":
            g = gridmod.make_euclidean(rows, cols, h)
        elif kind == "linf":
            g = gridmod.make_linf(rows, cols, h, args.rotation)
        elif kind == "smooth":
            g = gridmod.make_smooth_weight(rows, cols, h, args.seed)
        else:
            g = gridmod.make_radial_weight(rows, cols, h)
    save_grid(g, args.output)
    print(_dumps({"path": str(args.output), "rows": g.rows, "cols": g.cols, "h": g.h,
                  "kind": g.kind.value, "meta": g.meta}), end="")
    return EXIT_OK


def _result_json(res) -> dict:
    return {"value": res.value, "energy": res.energy, "residual": res.residual,
            "iterations": res.iterations}


def cmd_modulus(args) -> int:
    g = load_grid(args.grid)
    res = modulus(g, _quad(g, args.quad), args.pair, args.tol)
    _emit(args, _dumps(_result_json(res)))
    return EXIT_OK


def cmd_dual(args) -> int:
    g = load_grid(args.grid)
    res = dual_modulus(g, _quad(g, args.quad), args.tol)
    _emit(args, _dumps(_result_json(res)))
    return EXIT_OK


def cmd_annulus(args) -> int:
    g = load_grid(args.grid)
    c = tuple(args.center) if args.center else ((g.rows - 1) // 2, (g.cols - 1) // 2)
    val = annulus_modulus(g, c, args.r, args.R, args.tol)
    _emit(args, _dumps({"center": list(c), "r": args.r, "R": args.R, "value": val}))
    return EXIT_OK


_TEST_FUNCTIONS = {
    "one": lambda y1, y2: np.ones_like(y1),
    "y1": lambda y1, y2: y1,
    "left_half": lambda y1, y2: (y1 < 0.5).astype(float),
}


def cmd_uniformize(args) -> int:
    g = load_grid(args.grid)
    q = _quad(g, args.quad)
    fmap = conjugate(g, q, solve_dirichlet(g, q, 1, 3, args.tol))
    checks = {"m1": fmap.m1, "degree_ok": degree_check(fmap)}
    checks["dividing"] = {f"{s:g}-{t:g}": dividing_modulus_check(g, q, fmap, s, t)._asdict()
                          for s, t in ((0.0, 1.0), (0.25, 0.75), (0.4, 0.6))}
    checks["change_of_variables"] = {k: change_of_variables_check(g, q, fmap, f)._asdict()
                                     for k, f in _TEST_FUNCTIONS.items()}
    try:
        checks["dyadic_k2_worst"] = dyadic_mass_check(g, q, fmap, args.k)
    except GeometryError as exc:
        checks["dyadic_k2_worst"] = None
        checks["dyadic_error"] = str(exc)
    if args.csv:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "x", "y", "u", "v"])
        ni, nj = q.node_shape
        for i in range(ni):
            for j in range(nj):
                gi, gj = q.i0 + i, q.j0 + j
                w.writerow([gi * g.cols + gj, repr(gj * g.h), repr(gi * g.h),
                            repr(float(fmap.u.u[i, j])), repr(float(fmap.v[i, j]))])
        Path(args.csv).write_text(buf.getvalue())
    _emit(args, _dumps(checks))
    return EXIT_OK


def cmd_audit(args) -> int:
    g = load_grid(args.grid)
    if args.quad:
        squares = [_quad(g, args.quad)]
    elif args.full_only:
        squares = [gridmod.Quad.full(g)]
    else:
        squares = None
    centers = [tuple(args.center)] if args.center else None
    rep = audit(g, squares=squares, centers=centers, tol=args.tol, threads=_threads(args))
    if args.csv:
        Path(args.csv).write_text(rep.annulus_csv())
    _emit(args, rep.to_json() + "\n")
    return EXIT_OK


def cmd_john(args) -> int:
    if args.body:
        body = np.array(args.body).reshape(-1, 2)
    elif args.regular:
        body = norms.regular_polygon(args.regular)
    else:
        body = norms.linf_ball(args.rotation)
    r = john_ellipse(body)
    _emit(args, _dumps({"matrix": np.asarray(r.matrix).tolist(), "radius": r.radius,
                        "containment_ratio": r.containment_ratio, "lipschitz": r.lipschitz,
                        "jacobian": r.jacobian, "dilatation_bound": r.dilatation_bound,
                        "jacobian_bound": r.jacobian_bound}))
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import run_all
    results = run_all(only=args.only, seed=args.seed)
    for r in results:
        print(r.line(), flush=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="solver tolerance")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for randomized sweeps")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (fallback: MODSURF_THREADS)")
    common.add_argument("-o", "--output", default=argparse.SUPPRESS, help="output path")

    p = argparse.ArgumentParser(prog="modsurf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common], help="write a grid file")
    s.add_argument("generator", choices=["euclidean", "linf", "cantor", "smooth", "radial"])
    s.add_argument("--n", type=int, help="nodes per side")
    s.add_argument("--rows", type=int)
    s.add_argument("--cols", type=int)
    s.add_argument("--h", type=float)
    s.add_argument("--rotation", type=float, default=0.0, help="rotation of the max-norm ball (radians)")
    s.add_argument("--depth", type=int)
    s.add_argument("--a", type=_floats)
    s.add_argument("--floor-eps", type=float, default=0.0)
    s.set_defaults(func=cmd_generate)

    for name, func, helptext in (("modulus", cmd_modulus, "modulus of an edge family"),
                                 ("dual", cmd_dual, "modulus of the separating family")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("grid")
        s.add_argument("--quad", type=_ints, help="i0,i1,j0,j1 (inclusive cell indices)")
        if name == "modulus":
            s.add_argument("--pair", choices=["13", "24"], default="13")
        s.set_defaults(func=func)

    s = sub.add_parser("annulus", parents=[common], help="annulus modulus about a node")
    s.add_argument("grid")
    s.add_argument("--center", type=_ints)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--R", type=float, required=True)
    s.set_defaults(func=cmd_annulus)

    s = sub.add_parser("uniformize", parents=[common], help="uniformizing map and identity checks")
    s.add_argument("grid")
    s.add_argument("--quad", type=_ints)
    s.add_argument("--k", type=int, default=2, help="dyadic level for the mass check")
    s.add_argument("--csv", help="write the node map (node, x, y, u, v) here")
    s.set_defaults(func=cmd_uniformize)

    s = sub.add_parser("audit", parents=[common], help="reciprocality audit report")
    s.add_argument("grid")
    s.add_argument("--quad", type=_ints, help="audit this quad only")
    s.add_argument("--full-only", action="store_true", help="audit only the full grid square")
    s.add_argument("--center", type=_ints)
    s.add_argument("--csv", help="write annulus curves here")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("john", parents=[common], help="John ellipse of a symmetric polygon")
    s.add_argument("--body", type=_floats, help="x1,y1,x2,y2,... counter-clockwise")
    s.add_argument("--regular", type=int, help="regular polygon with this many vertices")
    s.add_argument("--rotation", type=float, default=0.0, help="rotated max-norm square")
    s.set_defaults(func=cmd_john)

    s = sub.add_parser("check", parents=[common], help="run the acceptance criteria")
    s.add_argument("--only", type=_ints, help="criterion numbers to run")
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"modsurf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        extra = f" (residual {exc.residual:.3e})" if exc.residual is not None else ""
        print(f"modsurf: solver error: {exc}{extra}", file=sys.stderr)
        return EXIT_SOLVER
    except GeometryError as exc:
        print(f"modsurf: geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (GridError, OSError, ValueError) as exc:
        print(f"modsurf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
