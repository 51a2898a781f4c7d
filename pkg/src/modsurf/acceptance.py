"""Acceptance criteria as runnable checks.

Each ``criterion_N`` returns a :class:`Criterion`; a criterion passes only when
every numeric condition holds and it finishes inside its time limit.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import grid as gridmod, norms
from .dilatation import john_ellipse, norm_field_dilatation
from .errors import DegenerateGeometryError
from .metric import ball_mass_scan, distance_field, node_index
from .modulus import annulus_modulus, dual_modulus, modulus, solve_dirichlet
from .oracle import modulus_oracle
from .reciprocal import (MaximalOperator, annulus_bound, audit_square, ball_radius_limit,
                         coarea_check)
from .uniformize import (change_of_variables_check, conjugate, dividing_modulus_check,
                         dyadic_mass_check)

LIMITS = {1: 1, 2: 30, 3: 60, 4: 120, 5: 120, 6: 30, 7: 30, 8: 120, 9: 60, 10: 60}
NAMES = {
    1: "Euclidean baseline",
    2: "primal-dual duality",
    3: "oracle equivalence",
    4: "L-infinity sharp constant",
    5: "Cantor blow-up",
    6: "annulus decay",
    7: "dividing modulus",
    8: "dyadic mass and change of variables",
    9: "John ellipse and dilatation",
    10: "maximal and coarea inequalities",
}


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    limit: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} "
                f"({self.seconds:.2f}s, limit {self.limit:g}s)")


def _timed(number: int, body) -> Criterion:
    t0 = time.perf_counter()
    ok, detail = body()
    dt = time.perf_counter() - t0
    limit = LIMITS[number]
    if dt >= limit:
        ok = False
        detail += f"; over time limit"
    return Criterion(number, NAMES[number], bool(ok), detail, dt, limit)


def _unit_grid(n: int, make, *args):
    return make(n, n, 1.0 / (n - 1), *args)


# ---------------------------------------------------------------- 1


def criterion_1(seed: int = 0) -> Criterion:
    def body():
        g = _unit_grid(65, gridmod.make_euclidean)
        q = gridmod.Quad.full(g)
        m1 = modulus(g, q, "13").value
        m2 = modulus(g, q, "24").value
        e1, ep = abs(m1 - 1), abs(m1 * m2 - 1)
        return e1 <= 1e-9 and ep <= 1e-6, f"|M1-1|={e1:.2e}, |M1*M2-1|={ep:.2e}"
    return _timed(1, body)


# ---------------------------------------------------------------- 2


def _random_quad(rng, g, min_side=2):
    mi, mj = g.cell_shape
    i0, j0 = rng.integers(0, mi - min_side + 1), rng.integers(0, mj - min_side + 1)
    i1 = rng.integers(i0 + min_side - 1, mi)
    j1 = rng.integers(j0 + min_side - 1, mj)
    return gridmod.Quad(int(i0), int(i1), int(j0), int(j1))


def criterion_2(seed: int = 0) -> Criterion:
    """Smooth-weight grids, plus random norm fields where the network is not Euclidean."""
    def body():
        rng = np.random.default_rng(seed)
        worst = {"smooth": 0.0, "norm-field": 0.0}
        for t in range(50):
            for kind in worst:
                if kind == "smooth":
                    g = _unit_grid(33, gridmod.make_smooth_weight, seed * 1000 + t)
                else:
                    g = _unit_grid(17, gridmod.make_random_norm_field, seed * 1000 + t)
                q = _random_quad(rng, g)
                err = abs(modulus(g, q, "13").value * dual_modulus(g, q).value - 1)
                worst[kind] = max(worst[kind], err)
        ok = max(worst.values()) <= 1e-8
        return ok, ("worst |M*Mdual-1| over 50 quads: smooth {smooth:.2e}, "
                    "norm field {norm-field:.2e}".format(**worst))
    return _timed(2, body)


# ---------------------------------------------------------------- 3


def _random_weight(rng, shape, zeros: bool) -> np.ndarray:
    w = rng.uniform(0.2, 2.0, size=shape)
    if zeros:
        w[rng.random(shape) < 0.3] = 0.0
    return w


def criterion_3(seed: int = 0) -> Criterion:
    """Every cell shape from 1x1 to 5x5, 20 fields each (half with zero cells), both families."""
    def body():
        rng = np.random.default_rng(seed)
        worst, count = 0.0, 0
        for a, b in itertools.product(range(1, 6), repeat=2):
            for t in range(20):
                g = gridmod.make_weighted(_random_weight(rng, (a, b), t % 2 == 1), 1.0 / max(a, b))
                q = gridmod.Quad.full(g)
                for pair in ("13", "24"):
                    try:
                        fast = modulus(g, q, pair).value
                    except DegenerateGeometryError:
                        fast = math.inf  # a zero-length path joins the two sides
                    slow = modulus_oracle(g, q, pair)
                    if math.isinf(fast) or math.isinf(slow):
                        err = 0.0 if fast == slow else math.inf
                    else:
                        err = abs(fast - slow)
                    worst = max(worst, err)
                    count += 1
        return worst <= 1e-4, f"{count} comparisons, worst |fast-oracle|={worst:.2e}"
    return _timed(3, body)


# ---------------------------------------------------------------- 4


def criterion_4(seed: int = 0) -> Criterion:
    """Rotated max-norm: moduli pi/2, product pi^2/4, error not growing under refinement.

    The discretization reproduces the continuum values to round-off, so the
    refinement clause is met when the finer error is not larger or both are at
    round-off level (< 1e-9).
    """
    def body():
        errs, parts = {}, []
        ok = True
        for n in (129, 257):
            g = _unit_grid(n, gridmod.make_linf, math.pi / 4)
            s = audit_square(g, gridmod.Quad.full(g))
            e1 = abs(s.m1 - math.pi / 2) / (math.pi / 2)
            e2 = abs(s.m2 - math.pi / 2) / (math.pi / 2)
            ep = abs(s.product - math.pi ** 2 / 4) / (math.pi ** 2 / 4)
            errs[n] = max(e1, e2, ep)
            ok &= max(e1, e2, ep) <= 0.05
            parts.append(f"{n}^2: M1={s.m1:.6f} M2={s.m2:.6f} product={s.product:.6f}")
        refine = errs[257] <= errs[129] or max(errs.values()) < 1e-9
        parts.append(f"rel err {errs[129]:.1e} -> {errs[257]:.1e}")
        return ok and refine, "; ".join(parts)
    return _timed(4, body)


# ---------------------------------------------------------------- 5


def criterion_5(seed: int = 0) -> Criterion:
    """Cantor weights with a = 1/2 audited on the unit square at depths 1, 2, 3."""
    def body():
        prods, parts, ok = [], [], True
        for k in (1, 2, 3):
            g = gridmod.make_cantor_weight(k, [Fraction(1, 2)] * k)
            s = audit_square(g, gridmod.Quad.full(g))
            frac = Fraction(g.meta["cantor_fraction"])
            mk = float(1 / (1 - frac))
            prods.append(s.product)
            ok &= s.product is not None and s.product >= 0.8 * mk * mk
            parts.append(f"k={k}: product={s.product:.4f} vs 0.8*M_k^2={0.8 * mk * mk:.4f}")
        inc = all(b > a for a, b in zip(prods, prods[1:]))
        parts.append("strictly increasing" if inc else "not increasing")
        return ok and inc, "; ".join(parts)
    return _timed(5, body)


# ---------------------------------------------------------------- 6


def criterion_6(seed: int = 0) -> Criterion:
    def body():
        g = _unit_grid(129, gridmod.make_euclidean)
        c = (64, 64)
        R = 0.9 * ball_radius_limit(g, c)
        radii = list(np.geomspace(2.02 * g.h, R, 6))
        c_u = ball_mass_scan(g, radii).c_u
        ok, parts = True, [f"C_U={c_u:.3f}"]
        for q in (4, 8, 16):
            val = annulus_modulus(g, c, R / q, R)
            exact = 2 * math.pi / math.log(q)
            rel = abs(val - exact) / exact
            margin = annulus_bound(c_u, R / q, R) / val
            ok &= rel <= 0.10 and margin >= 1.5
            parts.append(f"R/r={q}: rel err {rel:.3f}, margin {margin:.1f}x")
        return ok, "; ".join(parts)
    return _timed(6, body)


# ---------------------------------------------------------------- 7


def criterion_7(seed: int = 0) -> Criterion:
    def body():
        levels = np.round(np.arange(0, 1.0001, 0.1), 10)
        bands = [(s, t) for s in levels for t in levels if t - s >= 0.2 - 1e-12]
        worst = 0.0
        for k in range(3):
            g = _unit_grid(129, gridmod.make_smooth_weight, seed * 100 + k)
            q = gridmod.Quad.full(g)
            u = solve_dirichlet(g, q)
            for s, t in bands:
                worst = max(worst, dividing_modulus_check(g, q, u, float(s), float(t)).relative_error)
        return worst <= 0.02, f"3 grids x {len(bands)} bands, worst rel err {worst:.2e}"
    return _timed(7, body)


# ---------------------------------------------------------------- 8


_G = {
    "1": lambda y1, y2: np.ones_like(y1),
    "y1": lambda y1, y2: y1,
    "left half": lambda y1, y2: (y1 < 0.5).astype(float),
}


def criterion_8(seed: int = 0) -> Criterion:
    def body():
        ok, parts = True, []
        for label, g in (("smooth", _unit_grid(257, gridmod.make_smooth_weight, seed)),
                         ("norm field", _unit_grid(257, gridmod.make_random_norm_field, seed))):
            q = gridmod.Quad.full(g)
            fmap = conjugate(g, q, solve_dirichlet(g, q))
            dy = dyadic_mass_check(g, q, fmap, 2)
            cv = max(change_of_variables_check(g, q, fmap, f).relative_error for f in _G.values())
            ok &= dy <= 0.05 and cv <= 0.02
            parts.append(f"{label}: dyadic {dy:.2e}, change of variables {cv:.2e}")
        return ok, "; ".join(parts)
    return _timed(8, body)


# ---------------------------------------------------------------- 9


def criterion_9(seed: int = 0) -> Criterion:
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(10_000):
            body_ = norms.random_symmetric_polygon(rng, int(rng.integers(2, 7)))
            worst = max(worst, john_ellipse(body_).containment_ratio)
        g = _unit_grid(33, gridmod.make_random_norm_field, seed)
        cd = norm_field_dilatation(g)
        field_max = cd.max_ratio
        linf = john_ellipse(norms.linf_ball())
        el = abs(linf.lipschitz - math.sqrt(2))
        ej = abs(linf.jacobian - 4 / math.pi)
        ok = (worst <= math.sqrt(2) + 1e-9 and field_max <= 2 + 1e-9
              and el <= 1e-6 and ej <= 1e-6)
        return ok, (f"max ratio {worst:.12f}, field max {field_max:.6f}, "
                    f"L-inf (L, J) errors ({el:.1e}, {ej:.1e})")
    return _timed(9, body)


# ---------------------------------------------------------------- 10


def criterion_10(seed: int = 0) -> Criterion:
    """100 nonnegative fields on each grid kind; ``m`` is a distance function from a random node."""
    def body():
        rng = np.random.default_rng(seed)
        worst_max, worst_co, trials = 0.0, 0.0, 0
        for kind in ("conformal", "norm field"):
            for k in range(5):
                if kind == "conformal":
                    g = gridmod.make_weighted(_random_weight(rng, (16, 16), k % 2 == 1), 1 / 16)
                else:
                    g = _unit_grid(17, gridmod.make_random_norm_field, seed * 100 + k)
                op = MaximalOperator(g)
                for _ in range(20):
                    f = rng.exponential(size=g.cell_shape) * (rng.random(g.cell_shape) < 0.7)
                    l2, bound = op.l2_check(f)
                    worst_max = max(worst_max, l2 / bound)
                    src = (int(rng.integers(0, g.rows)), int(rng.integers(0, g.cols)))
                    m = distance_field(g, [node_index(g, src)])
                    co = coarea_check(g, m, f)
                    worst_co = max(worst_co, co.lhs / co.rhs if co.rhs > 0 else 0.0)
                    trials += 1
        ok = worst_max <= 1 + 1e-9 and worst_co <= 1 + 1e-9
        return ok, (f"{trials} trials, worst int(Mg)^2 / 8 int g^2 = {worst_max:.3f}, "
                    f"worst coarea lhs/rhs = {worst_co:.3f}")
    return _timed(10, body)


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


def run_all(only=None, seed: int = 0) -> list[Criterion]:
    return [CRITERIA[n](seed) for n in (only or sorted(CRITERIA))]
