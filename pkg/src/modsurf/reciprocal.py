"""Audits of the reciprocality conditions and of the quadratic mass bound.

A surface is kappa-reciprocal when the moduli of the two edge families of every
quad satisfy ``1/kappa <= M1 M2 <= kappa`` and annulus moduli around every point
tend to zero.  On a grid these become finite samples: products over a family of
sub-squares and annulus curves over a sequence of inner radii.  The quadratic
mass bound ``H^2(B(x, r)) <= C_U r^2`` implies both, through a chain of explicit
(non-sharp) inequalities, each of which is checked here as stated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix

from .errors import GeometryError, SolverError
from .grid import Kind, MetricGrid, Quad, cantor_squares
from .metric import (DEFAULT_STENCIL, all_node_distances, ball_mass_scan, distance_field,
                     mass_blowup, metric_edges, node_index)
from .modulus import annulus_modulus, dual_modulus, modulus, solve_dirichlet
from .network import DEFAULT_TOL

CSV_HEADER = "# modsurf-csv v1"
MAXIMAL_CONSTANT = 8.0
ADMISSIBLE_CONSTANT = 961.0
COAREA_U_CONSTANT = 8000.0


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def quad_id(q: Quad) -> str:
    return f"Q[{q.i0}:{q.i1},{q.j0}:{q.j1}]"


# ---------------------------------------------------------------- squares


@dataclass
class SquareAudit:
    id: str
    quad: Quad
    m1: float | None
    m2: float | None
    product: float | None
    duality_error: float | None = None
    error: str | None = None


def dyadic_squares(grid: MetricGrid, min_side: int = 8) -> list[Quad]:
    """Dyadic sub-squares of the largest square of cells anchored at the origin, down to ``min_side`` cells."""
    mi, mj = grid.cell_shape
    side = min(mi, mj)
    out = []
    while side >= min_side:
        for i in range(0, mi - side + 1, side):
            for j in range(0, mj - side + 1, side):
                out.append(Quad(i, i + side - 1, j, j + side - 1))
        if side % 2:
            break
        side //= 2
    return out


def cantor_block_squares(grid: MetricGrid) -> list[Quad]:
    """Squares around every Cantor block of every level, each block padded by half its side.

    Empty unless the grid came from ``make_cantor_weight``; pads that leave the
    grid or miss the cell lattice are skipped.
    """
    meta = grid.meta
    if meta.get("generator") != "cantor" or grid.rows != grid.cols:
        return []
    n = grid.cols - 1
    a = [Fraction(x) for x in meta["a"]]
    out = []
    for level in range(1, int(meta["depth"]) + 1):
        for x0, y0, s in cantor_squares(level, a):
            lo_x, lo_y, side = (x0 - s / 2) * n, (y0 - s / 2) * n, 2 * s * n
            if any(v.denominator != 1 for v in (lo_x, lo_y, side)):
                continue
            i0, j0, m = int(lo_y), int(lo_x), int(side)
            if i0 >= 0 and j0 >= 0 and i0 + m <= n and j0 + m <= n:
                out.append(Quad(i0, i0 + m - 1, j0, j0 + m - 1))
    return out


def default_squares(grid: MetricGrid) -> list[Quad]:
    """Dyadic squares down to 8 cells, plus the padded Cantor blocks on Cantor grids."""
    seen, out = set(), []
    for q in dyadic_squares(grid) + cantor_block_squares(grid):
        if q not in seen:
            seen.add(q)
            out.append(q)
    return out


def audit_square(grid: MetricGrid, quad: Quad, tol: float = DEFAULT_TOL,
                 check_duality: bool = False) -> SquareAudit:
    try:
        m1 = modulus(grid, quad, "13", tol).value
        m2 = modulus(grid, quad, "24", tol).value
        dual = abs(m1 * dual_modulus(grid, quad, tol).value - 1) if check_duality else None
    except (SolverError, GeometryError) as exc:
        return SquareAudit(quad_id(quad), quad, None, None, None, None, f"{type(exc).__name__}: {exc}")
    return SquareAudit(quad_id(quad), quad, m1, m2, m1 * m2, dual)


class Kappa(NamedTuple):
    upper: float
    lower: float


def kappa_estimates(squares: list[SquareAudit]) -> Kappa:
    """``(max product, max 1/product)`` over the squares that solved."""
    prods = [s.product for s in squares if s.product is not None]
    if not prods:
        return Kappa(math.nan, math.nan)
    return Kappa(max(prods), max(1.0 / p for p in prods))


def audit_squares(grid: MetricGrid, squares=None, tol: float = DEFAULT_TOL, threads: int = 1,
                  check_duality: bool = False) -> tuple[list[SquareAudit], Kappa]:
    """Modulus products over a family of quads (default: :func:`default_squares`)."""
    if squares is None:
        squares = default_squares(grid)
    squares = list(squares)
    for q in squares:
        q.check_inside(grid)
    res = _map(lambda q: audit_square(grid, q, tol, check_duality), squares, threads)
    res.sort(key=lambda s: (s.quad.i0, s.quad.i1, s.quad.j0, s.quad.j1))
    return res, kappa_estimates(res)


# ---------------------------------------------------------------- annuli


@dataclass
class AnnulusPoint:
    center: tuple[int, int]
    r: float
    R: float
    modulus: float


@dataclass
class PointAudit:
    curves: list[AnnulusPoint]
    violations: list[tuple[int, int]]
    errors: dict = field(default_factory=dict)


def annulus_bound(c_u: float, r: float, R: float) -> float:
    """Upper bound ``8 C_U / log2(R/r)`` for annulus moduli under the mass bound."""
    return 8.0 * c_u / math.log2(R / r)


def audit_point_condition(grid: MetricGrid, centers, R: float, r_sequence, tol: float = DEFAULT_TOL,
                          threshold: float | None = None, threads: int = 1) -> PointAudit:
    """Annulus moduli around each center for a decreasing sequence of inner radii.

    A center is flagged when its curve increases as ``r`` shrinks, or when
    ``threshold`` is given and the value at the finest radius exceeds it.
    """
    rs = [float(r) for r in r_sequence]
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_sequence must be strictly decreasing")
    if any(r <= grid.h for r in rs):
        raise ValueError("every inner radius must exceed h")
    centers = [tuple(int(x) for x in c) for c in centers]

    def run(c):
        return [annulus_modulus(grid, c, r, R, tol) for r in rs]

    curves, violations, errors = [], [], {}
    for c, vals in zip(centers, _map(_guard(run), centers, threads)):
        if isinstance(vals, Exception):
            errors[c] = f"{type(vals).__name__}: {vals}"
            violations.append(c)
            continue
        curves += [AnnulusPoint(c, r, float(R), m) for r, m in zip(rs, vals)]
        bad = any(b > a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
        if threshold is not None and vals[-1] > threshold:
            bad = True
        if bad:
            violations.append(c)
    return PointAudit(curves, violations, errors)


def _guard(fn):
    def run(x):
        try:
            return fn(x)
        except (SolverError, GeometryError) as exc:
            return exc
    return run


# ---------------------------------------------------------------- maximal function


def _corner_average(grid: MetricGrid) -> csr_matrix:
    mi, mj = grid.cell_shape
    cells = np.arange(mi * mj)
    ci, cj = cells // mj, cells % mj
    cols = np.concatenate([ci * grid.cols + cj, ci * grid.cols + cj + 1,
                           (ci + 1) * grid.cols + cj, (ci + 1) * grid.cols + cj + 1])
    return csr_matrix((np.full(4 * mi * mj, 0.25), (np.tile(cells, 4), cols)),
                      shape=(mi * mj, grid.n_nodes))


def cell_distance_matrix(grid: MetricGrid, stencil: int = DEFAULT_STENCIL) -> np.ndarray:
    """Cell-to-cell path distances: node distances averaged over the corners of both cells."""
    A = _corner_average(grid)
    D = all_node_distances(grid, stencil)
    return np.asarray(A @ (A @ D).T)


def default_radii(grid: MetricGrid, diameter: float) -> list[float]:
    radii, r = [], 2 * grid.h * (float(np.max(grid.weight)) if grid.kind is Kind.CONFORMAL_WEIGHT
                                 else float(np.max(grid.norm_length((1, 0)))))
    while r <= diameter / 5:
        radii.append(r)
        r *= 2
    return radii or [diameter / 5]


class MaximalOperator:
    """``Mg(x) = max_r int_{B(x,r) & Q} g dH^2 / H^2(B(x, 5r))`` over a finite radius set.

    The cell distance matrix is dense, so this is meant for grids of a few thousand cells.
    """

    def __init__(self, grid: MetricGrid, radii=None, domain=None, stencil: int = DEFAULT_STENCIL):
        self.grid = grid
        D = cell_distance_matrix(grid, stencil)
        fin = D[np.isfinite(D)]
        self.diameter = float(fin.max()) if fin.size else 0.0
        self.radii = sorted(float(r) for r in (radii if radii is not None else default_radii(grid, self.diameter)))
        if not self.radii or self.radii[0] <= 0:
            raise ValueError("radii must be positive")
        mu = grid.cell_measure.ravel()
        self.domain = np.ones(mu.shape, bool) if domain is None else np.asarray(domain, bool).ravel()
        self.mu = mu
        self._num = [(D < r).astype(float) * self.domain[None, :] for r in self.radii]
        self._den = [((D < 5 * r).astype(float) @ mu) for r in self.radii]

    def __call__(self, g: np.ndarray) -> np.ndarray:
        """Apply to one field (cell shape) or a batch ``(k, *cell_shape)``."""
        g = np.asarray(g, dtype=float)
        shape = self.grid.cell_shape
        batch = g.reshape(-1, shape[0] * shape[1]).T * self.mu[:, None]
        out = np.zeros_like(batch)
        for num, den in zip(self._num, self._den):
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(den[:, None] > 0, (num @ batch) / den[:, None], 0.0)
            out = np.maximum(out, val)
        return out.T.reshape(g.shape)

    def l2_check(self, g: np.ndarray) -> tuple[float, float]:
        """``(int_Q (Mg)^2, 8 int_Q g^2)`` in the grid's Hausdorff measure."""
        g = np.asarray(g, float)
        Mg = self(g)
        w = (self.mu * self.domain).reshape(self.grid.cell_shape)
        return float(np.sum(Mg * Mg * w)), MAXIMAL_CONSTANT * float(np.sum(g * g * w))


def maximal_function(grid: MetricGrid, g: np.ndarray, radii=None, domain=None,
                     stencil: int = DEFAULT_STENCIL) -> np.ndarray:
    return MaximalOperator(grid, radii, domain, stencil)(g)


# ---------------------------------------------------------------- coarea


class CoareaCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool
    lipschitz: float


def lipschitz_constant(grid: MetricGrid, m: np.ndarray) -> float:
    """Lipschitz constant of the piecewise linear ``m``: the largest dual norm of its gradient on a half cell.

    Also takes the max with ``|m(a) - m(b)| / len(a, b)`` over 8-neighbour
    edges, which can only agree or be smaller.
    """
    m = np.asarray(m, float)
    tri = max(float(np.max(grid.cell_dual_norm(gx, gy))) for gx, gy, _ in _triangle_gradients(m, grid.h))
    src, dst, ln = metric_edges(grid, 8)
    flat = m.ravel()
    dm = np.abs(flat[src] - flat[dst])
    if np.any((ln == 0) & (dm > 0)):
        return math.inf
    pos = ln > 0
    edge = float(np.max(dm[pos] / ln[pos])) if pos.any() else 0.0
    return max(tri, edge)


def _triangle_gradients(m: np.ndarray, h: float):
    ll, lr, ul, ur = m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]
    # lower-right triangle (ll, lr, ur) and upper-left triangle (ll, ur, ul)
    return [((lr - ll) / h, (ur - lr) / h, (ll, lr, ur)), ((ur - ul) / h, (ul - ll) / h, (ll, ur, ul))]


def level_set_integral(grid: MetricGrid, m: np.ndarray, g: np.ndarray, mode: str = "exact",
                       samples: int = 400) -> float:
    """``int_t int_{m = t} g dH^1 dt`` for ``m`` linear on each half cell.

    ``mode="exact"`` integrates in closed form (``|T| N(R grad m)`` per triangle);
    ``mode="sampled"`` sums the level-set lengths over ``samples`` midpoint levels.
    """
    m = np.asarray(m, float)
    g = np.asarray(g, float)
    area = 0.5 * grid.h * grid.h
    total = 0.0
    if mode == "sampled":
        lo, hi = float(np.min(m)), float(np.max(m))
        if hi <= lo:
            return 0.0
        ts = lo + (np.arange(samples) + 0.5) * (hi - lo) / samples
        dt = (hi - lo) / samples
    for gx, gy, verts in _triangle_gradients(m, grid.h):
        weight = grid.cell_norm(-gy, gx)  # rotated gradient, tangent to the level set
        if mode == "exact":
            total += float(np.sum(g * area * weight))
            continue
        if mode != "sampled":
            raise ValueError(f"unknown mode {mode!r}")
        a, b, c = np.sort(np.stack(verts), axis=0)
        span = c - a
        keep = (span > 0) & (g != 0)
        a, b, c, span = a[keep], b[keep], c[keep], span[keep]
        peak = 2 * area * (g * weight)[keep] / span
        t = ts[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(b > a, (t - a) / (b - a), 1.0)
            down = np.where(c > b, (c - t) / (c - b), 1.0)
        tent = np.where((t > a) & (t <= b), up, np.where((t > b) & (t < c), down, 0.0))
        total += float(np.sum(tent * peak) * dt)
    return total


def coarea_check(grid: MetricGrid, m: np.ndarray, g: np.ndarray, lipschitz: float | None = None,
                 mode: str = "exact", tol: float = 1e-9) -> CoareaCheck:
    """The coarea inequality ``int int_{m=t} g dH^1 dt <= (4L/pi) int g dH^2``."""
    m = np.asarray(m, float)
    g = np.asarray(g, float)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(g))):
        raise ValueError("coarea_check needs finite fields")
    if np.any(g < 0):
        raise ValueError("g must be nonnegative")
    L = lipschitz_constant(grid, m) if lipschitz is None else float(lipschitz)
    lhs = level_set_integral(grid, m, g, mode)
    rhs = 4 * L / math.pi * float(np.sum(g * grid.cell_measure))
    return CoareaCheck(lhs, rhs, lhs <= rhs * (1 + tol) + 1e-300, L)


# ---------------------------------------------------------------- mass-bound pipeline


@dataclass
class Check:
    ok: bool
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs / self.lhs if self.lhs > 0 else math.inf


@dataclass
class PipelineReport:
    c_u: float
    blowup: list
    annulus: list[tuple[AnnulusPoint, Check]]
    product: list[tuple[str, Check]]
    coarea_u: list[tuple[str, Check]]
    maximal: list[tuple[str, Check]]

    @property
    def mass_bound_suspect(self) -> bool:
        return bool(self.blowup)

    def all_ok(self) -> dict:
        return {
            "annulus_bound_ok": all(c.ok for _, c in self.annulus),
            "product_bound_ok": all(c.ok for _, c in self.product),
            "coarea_u_bound_ok": all(c.ok for _, c in self.coarea_u),
            "maximal_bound_ok": all(c.ok for _, c in self.maximal),
        }


def _subgrid(grid: MetricGrid, quad: Quad) -> MetricGrid:
    from .grid import make_norm_field, make_weighted
    cs = quad.cells()
    if grid.kind is Kind.CONFORMAL_WEIGHT:
        return make_weighted(grid.weight[cs], grid.h, grid.meta)
    return make_norm_field(grid.balls, grid.ball_index[cs], grid.h, grid.meta)


def center_node(grid: MetricGrid) -> tuple[int, int]:
    return (grid.rows - 1) // 2, (grid.cols - 1) // 2


def ball_radius_limit(grid: MetricGrid, center, stencil: int = DEFAULT_STENCIL) -> float:
    """Path distance from ``center`` to the grid boundary."""
    d = distance_field(grid, [node_index(grid, center)], stencil)
    return float(min(d[0].min(), d[-1].min(), d[:, 0].min(), d[:, -1].min()))


def mass_bound_pipeline(grid: MetricGrid, squares=None, radii=None, centers=None,
                        ratios=(4, 8, 16), tol: float = DEFAULT_TOL, threads: int = 1,
                        g=None) -> PipelineReport:
    """Estimate ``C_U`` and verify the inequalities that the mass bound implies.

    (a) annulus moduli ``<= 8 C_U / log2(R/r)``;
    (b) ``M1 M2 <= 8 * 961^2 * C_U^2`` on every audited square;
    (c) ``int_0^1 int_{u=t} g dH^1 dt <= 8000 C_U int_Q g M(rho) dH^2`` for the minimizer ``u``;
    plus the maximal-function bound ``int (M rho)^2 <= 8 int rho^2`` used in (b).
    """
    lo = 2 * grid.h
    hi = max(lo * 1.01, ball_radius_limit(grid, center_node(grid)) * 0.9)
    if radii is None:
        radii = list(np.geomspace(lo * 1.01, hi, 6))
    scan = ball_mass_scan(grid, radii)
    c_u = scan.c_u

    ann = []
    for c in centers or [center_node(grid)]:
        R = 0.9 * ball_radius_limit(grid, c)
        for q in ratios:
            r = R / q
            if r <= grid.h or r >= R / 2:
                continue
            val = annulus_modulus(grid, c, r, R, tol)
            bound = annulus_bound(c_u, r, R)
            ann.append((AnnulusPoint(tuple(c), r, R, val), Check(val <= bound, val, bound)))

    squares = [Quad.full(grid)] if squares is None else list(squares)
    audits, _ = audit_squares(grid, squares, tol, threads)
    prod = [(a.id, Check(a.product <= 8 * ADMISSIBLE_CONSTANT ** 2 * c_u ** 2, a.product,
                         8 * ADMISSIBLE_CONSTANT ** 2 * c_u ** 2))
            for a in audits if a.product is not None]

    coarea, maxi = [], []
    for q in squares:
        try:
            res = modulus(grid, q, "13", tol)
        except (SolverError, GeometryError):
            continue
        sub = _subgrid(grid, q)
        op = MaximalOperator(sub)
        rho = res.density
        Mrho = op(rho)
        l2, bound = op.l2_check(rho)
        maxi.append((quad_id(q), Check(l2 <= bound * (1 + 1e-9), l2, bound)))
        gq = np.ones(rho.shape) if g is None else np.asarray(g, float)[q.cells()]
        lhs = level_set_integral(sub, res.potential.u, gq)
        rhs = COAREA_U_CONSTANT * c_u * float(np.sum(gq * Mrho * sub.cell_measure))
        coarea.append((quad_id(q), Check(lhs <= rhs, lhs, rhs)))
    return PipelineReport(c_u, mass_blowup(scan), ann, prod, coarea, maxi)


# ---------------------------------------------------------------- reports


@dataclass
class ReciprocityReport:
    squares: list[SquareAudit]
    kappa_upper: float
    kappa_lower: float
    annulus_curves: list[AnnulusPoint]
    c_u: float
    maximal_bound_ok: bool
    coarea_bound_ok: bool
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "squares": [{"id": s.id, "quad": [s.quad.i0, s.quad.i1, s.quad.j0, s.quad.j1],
                         "m1": _num(s.m1), "m2": _num(s.m2), "product": _num(s.product),
                         **({"error": s.error} if s.error else {})} for s in self.squares],
            "kappa_upper": _num(self.kappa_upper),
            "kappa_lower": _num(self.kappa_lower),
            "annuli": [{"center": list(a.center), "r": a.r, "R": a.R, "modulus": _num(a.modulus)}
                       for a in self.annulus_curves],
            "c_u": _num(self.c_u),
            "checks": dict(self.checks, maximal_bound_ok=self.maximal_bound_ok,
                           coarea_bound_ok=self.coarea_bound_ok),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    def annulus_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["center_i", "center_j", "r", "R", "modulus"])
        for a in self.annulus_curves:
            w.writerow([a.center[0], a.center[1], repr(a.r), repr(a.R), repr(a.modulus)])
        return buf.getvalue()


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def audit(grid: MetricGrid, squares=None, centers=None, r_sequence=None, tol: float = DEFAULT_TOL,
          threads: int = 1) -> ReciprocityReport:
    """Full audit: square products, annulus curves and the mass-bound pipeline."""
    sq, kappa = audit_squares(grid, squares, tol, threads)
    pipe = mass_bound_pipeline(grid, squares=[s.quad for s in sq if s.product is not None][:4] or None,
                               tol=tol, threads=threads)
    centers = [tuple(c) for c in (centers or [center_node(grid)])]
    curves, flagged = [], []
    for c in centers:
        R = 0.9 * ball_radius_limit(grid, c)
        rs = r_sequence or [R / 2 ** k for k in range(2, 8) if R / 2 ** k > grid.h]
        if not rs:
            continue
        pa = audit_point_condition(grid, [c], R, rs, tol, threshold=None)
        curves += pa.curves
        flagged += pa.violations
    mids = [center_node(grid)]
    dist = distance_field(grid, [node_index(grid, mids[0])])
    co = coarea_check(grid, dist, np.ones(grid.cell_shape))
    flags = pipe.all_ok()
    checks = {
        "annulus_bound_ok": flags["annulus_bound_ok"],
        "product_bound_ok": flags["product_bound_ok"],
        "coarea_u_bound_ok": flags["coarea_u_bound_ok"],
        "annulus_monotone_ok": not flagged,
        "mass_blowup_centers": [list(c) for c in pipe.blowup],
        "distance_coarea": {"lhs": co.lhs, "rhs": co.rhs},
        "generator": grid.meta.get("generator"),
    }
    if grid.meta.get("generator") == "cantor":
        checks["cantor_profile"] = grid.meta.get("profile")
    return ReciprocityReport(sq, kappa.upper, kappa.lower, curves, pipe.c_u,
                             flags["maximal_bound_ok"], co.ok and flags["coarea_u_bound_ok"], checks)
