"""Discretized metric surfaces.

Nodes live on a ``rows x cols`` lattice with spacing ``h``; node ``(i, j)`` sits at
``(x, y) = (j*h, i*h)``.  Cell ``(i, j)`` is the square with lower-left node
``(i, j)``.  Each cell carries either a conformal weight ``w`` (the metric is
``w |dx|``) or a norm whose unit ball is a centrally symmetric polygon.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import norms
from .errors import AlignmentError, GeometryError, InvalidDimensionError


class Kind(str, enum.Enum):
    CONFORMAL_WEIGHT = "ConformalWeight"
    NORM_FIELD = "NormField"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _cell_centers(rows: int, cols: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    y = (np.arange(rows - 1) + 0.5) * h
    x = (np.arange(cols - 1) + 0.5) * h
    return np.meshgrid(x, y)


@dataclass(frozen=True, eq=False)
class MetricGrid:
    rows: int
    cols: int
    h: float
    kind: Kind
    area_factor: np.ndarray
    weight: np.ndarray | None = None
    balls: tuple = ()
    ball_index: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise InvalidDimensionError(f"need rows, cols >= 2, got {self.rows}x{self.cols}")
        if not self.h > 0:
            raise InvalidDimensionError(f"cell side must be positive, got {self.h}")
        shape = self.cell_shape
        if self.area_factor.shape != shape:
            raise InvalidDimensionError("area_factor shape does not match the cell lattice")
        if np.any(self.area_factor < 0):
            raise ValueError("area_factor must be nonnegative")
        if self.kind is Kind.CONFORMAL_WEIGHT:
            if self.weight is None or self.weight.shape != shape:
                raise InvalidDimensionError("weight shape does not match the cell lattice")
            if np.any(self.weight < 0) or not np.all(np.isfinite(self.weight)):
                raise ValueError("weights must be finite and nonnegative")
        else:
            if self.ball_index is None or self.ball_index.shape != shape or not self.balls:
                raise InvalidDimensionError("norm field needs one ball index per cell")

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.rows - 1, self.cols - 1)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def cell_measure(self) -> np.ndarray:
        """Hausdorff 2-measure of each cell."""
        return self.area_factor * self.h * self.h

    def norm_length(self, direction) -> np.ndarray:
        """Per-cell norm of the lattice vector ``direction = (dx, dy)`` (unit h = 1)."""
        dx, dy = direction
        if self.kind is Kind.CONFORMAL_WEIGHT:
            return self.weight * math.hypot(dx, dy)
        per_ball = np.array([norms.gauge(b, (dx, dy)) for b in self.balls])
        return per_ball[self.ball_index]

    def cell_norm(self, zx: np.ndarray, zy: np.ndarray) -> np.ndarray:
        """Norm of a per-cell vector field ``(zx, zy)``, each cell measured in its own norm."""
        zx, zy = np.broadcast_arrays(np.asarray(zx, float), np.asarray(zy, float))
        if self.kind is Kind.CONFORMAL_WEIGHT:
            return self.weight * np.hypot(zx, zy)
        out = np.empty(zx.shape)
        for k in np.unique(self.ball_index):
            m = self.ball_index == k
            out[m] = norms.gauge(self.balls[k], np.stack([zx[m], zy[m]], axis=-1))
        return out

    def cell_dual_norm(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """Dual norm of a per-cell covector ``(gx, gy)``; ``inf`` where a zero weight meets a nonzero covector."""
        gx, gy = np.broadcast_arrays(np.asarray(gx, float), np.asarray(gy, float))
        if self.kind is Kind.CONFORMAL_WEIGHT:
            g = np.hypot(gx, gy)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(g == 0, 0.0, g / self.weight)
        out = np.empty(gx.shape)
        for k in np.unique(self.ball_index):
            m = self.ball_index == k
            out[m] = norms.dual_gauge(self.balls[k], np.stack([gx[m], gy[m]], axis=-1))
        return out

    def scaled(self, lam: float) -> "MetricGrid":
        """Conformal grid with weight multiplied by the constant ``lam``."""
        if self.kind is not Kind.CONFORMAL_WEIGHT:
            raise TypeError("only conformal-weight grids can be rescaled")
        w = self.weight * lam
        return MetricGrid(self.rows, self.cols, self.h, self.kind, _frozen(w * w),
                          weight=_frozen(w), meta=dict(self.meta, scaled=lam))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) coordinates of cell centers, each of shape ``cell_shape``."""
        return _cell_centers(self.rows, self.cols, self.h)


@dataclass(frozen=True)
class Quad:
    """Cell-index rectangle ``[i0, i1] x [j0, j1]`` (inclusive) with sides in cyclic order.

    zeta1 is the left side, zeta2 the bottom, zeta3 the right, zeta4 the top, so the
    boundary is traversed counter-clockwise.
    """

    i0: int
    i1: int
    j0: int
    j1: int

    def __post_init__(self):
        if self.i1 < self.i0 or self.j1 < self.j0 or self.i0 < 0 or self.j0 < 0:
            raise GeometryError(f"empty or negative quad {self}")

    @classmethod
    def full(cls, grid: MetricGrid) -> "Quad":
        return cls(0, grid.rows - 2, 0, grid.cols - 2)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.i1 - self.i0 + 1, self.j1 - self.j0 + 1)

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.i1 - self.i0 + 2, self.j1 - self.j0 + 2)

    @property
    def n_cells(self) -> int:
        a, b = self.cell_shape
        return a * b

    def cells(self) -> tuple[slice, slice]:
        return slice(self.i0, self.i1 + 1), slice(self.j0, self.j1 + 1)

    def nodes(self) -> tuple[slice, slice]:
        return slice(self.i0, self.i1 + 2), slice(self.j0, self.j1 + 2)

    def check_inside(self, grid: MetricGrid) -> None:
        if self.i1 > grid.rows - 2 or self.j1 > grid.cols - 2:
            raise GeometryError(f"{self} does not fit in a {grid.rows}x{grid.cols} node grid")

    def side_mask(self, k: int) -> np.ndarray:
        """Boolean mask over local nodes lying on side ``zeta_k`` (corners included)."""
        m = np.zeros(self.node_shape, dtype=bool)
        if k == 1:
            m[:, 0] = True
        elif k == 2:
            m[0, :] = True
        elif k == 3:
            m[:, -1] = True
        elif k == 4:
            m[-1, :] = True
        else:
            raise ValueError(f"side index must be 1..4, got {k}")
        return m

    def side_edges(self, k: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Boundary segments of side ``zeta_k`` as pairs of local node indices."""
        ni, nj = self.node_shape
        if k in (1, 3):
            j = 0 if k == 1 else nj - 1
            return [((i, j), (i + 1, j)) for i in range(ni - 1)]
        if k in (2, 4):
            i = 0 if k == 2 else ni - 1
            return [((i, j), (i, j + 1)) for j in range(nj - 1)]
        raise ValueError(f"side index must be 1..4, got {k}")


# ---------------------------------------------------------------- generators


def make_weighted(weight, h: float, meta: dict | None = None) -> MetricGrid:
    w = np.asarray(weight, dtype=float)
    if w.ndim != 2:
        raise InvalidDimensionError("weight must be a 2-d cell array")
    return MetricGrid(w.shape[0] + 1, w.shape[1] + 1, float(h), Kind.CONFORMAL_WEIGHT,
                      _frozen(w * w), weight=_frozen(w), meta=dict(meta or {}))


def make_euclidean(rows: int, cols: int, h: float) -> MetricGrid:
    if rows < 2 or cols < 2:
        raise InvalidDimensionError(f"need rows, cols >= 2, got {rows}x{cols}")
    return make_weighted(np.ones((rows - 1, cols - 1)), h, {"generator": "euclidean"})


def make_norm_field(balls, ball_index, h: float, meta: dict | None = None) -> MetricGrid:
    balls = tuple(norms.as_symmetric_polygon(b) for b in balls)
    idx = np.asarray(ball_index, dtype=int)
    if idx.ndim != 2:
        raise InvalidDimensionError("ball_index must be a 2-d cell array")
    if idx.min() < 0 or idx.max() >= len(balls):
        raise ValueError("ball_index out of range")
    af = np.array([norms.area_factor(b) for b in balls])[idx]
    idx = np.array(idx)
    idx.setflags(write=False)
    return MetricGrid(idx.shape[0] + 1, idx.shape[1] + 1, float(h), Kind.NORM_FIELD,
                      _frozen(af), balls=balls, ball_index=idx, meta=dict(meta or {}))


def make_uniform_norm(rows: int, cols: int, h: float, ball, meta=None) -> MetricGrid:
    if rows < 2 or cols < 2:
        raise InvalidDimensionError(f"need rows, cols >= 2, got {rows}x{cols}")
    return make_norm_field([ball], np.zeros((rows - 1, cols - 1), dtype=int), h, meta)


def make_linf(rows: int, cols: int, h: float, rotation: float = 0.0) -> MetricGrid:
    """Max-norm grid; ``rotation`` turns the unit square relative to the lattice."""
    return make_uniform_norm(rows, cols, h, norms.linf_ball(rotation),
                             {"generator": "linf", "rotation": rotation})


def make_random_norm_field(rows: int, cols: int, h: float, seed: int = 0,
                           pairs: int = 3) -> MetricGrid:
    rng = np.random.default_rng(seed)
    n = (rows - 1) * (cols - 1)
    balls = [norms.random_symmetric_polygon(rng, pairs) for _ in range(n)]
    idx = np.arange(n).reshape(rows - 1, cols - 1)
    return make_norm_field(balls, idx, h, {"generator": "random-norm", "seed": seed})


def make_smooth_weight(rows: int, cols: int, h: float, seed: int = 0,
                       modes: int = 3, amplitude: float = 0.5) -> MetricGrid:
    """Positive weight ``exp`` of a random low-frequency trigonometric sum."""
    rng = np.random.default_rng(seed)
    x, y = _cell_centers(rows, cols, h)
    lx, ly = (cols - 1) * h, (rows - 1) * h
    s = np.zeros_like(x)
    for _ in range(modes):
        kx, ky = rng.integers(0, 3, size=2)
        ph = rng.uniform(0, 2 * math.pi)
        s += rng.normal() * np.cos(2 * math.pi * (kx * x / lx + ky * y / ly) + ph)
    w = np.exp(amplitude * s / math.sqrt(modes))
    return make_weighted(w, h, {"generator": "smooth", "seed": seed})


def make_radial_weight(rows: int, cols: int, h: float, bump: float = 1.0,
                       width: float = 0.2) -> MetricGrid:
    x, y = _cell_centers(rows, cols, h)
    cx, cy = (cols - 1) * h / 2, (rows - 1) * h / 2
    r2 = ((x - cx) ** 2 + (y - cy) ** 2) / ((cols - 1) * h) ** 2
    w = 1.0 + bump * np.exp(-r2 / (width * width))
    return make_weighted(w, h, {"generator": "radial"})


# ---------------------------------------------------------------- Cantor weight


def _fractions(a) -> list[Fraction]:
    out = []
    for aj in a:
        f = Fraction(str(aj)) if not isinstance(aj, Fraction) else aj
        if not 0 < f < 1:
            raise AlignmentError(f"Cantor parameters must lie in (0, 1), got {aj}")
        out.append(f)
    return out


def cantor_squares(depth: int, a) -> list[tuple[Fraction, Fraction, Fraction]]:
    """Surviving squares ``(x0, y0, side)`` after ``depth`` steps, as exact fractions."""
    if depth < 1:
        raise AlignmentError("Cantor depth must be at least 1")
    a = _fractions(a)
    if len(a) < depth:
        a = a + [a[-1]] * (depth - len(a))
    squares = [(Fraction(0), Fraction(0), Fraction(1))]
    for k in range(depth):
        nxt = []
        for x0, y0, s in squares:
            q = s / 2
            child = q * (1 - a[k])
            off = (q - child) / 2
            for dx in (0, 1):
                for dy in (0, 1):
                    nxt.append((x0 + dx * q + off, y0 + dy * q + off, child))
        squares = nxt
    return squares


def cantor_resolution(depth: int, a, min_cells: int = 64) -> int:
    """Smallest multiple of the alignment denominator that is at least ``min_cells``."""
    den = 1
    for x0, y0, s in cantor_squares(depth, a):
        for v in (x0, y0, s):
            den = den * v.denominator // math.gcd(den, v.denominator)
    return den * max(1, -(-min_cells // den))


def make_cantor_weight(depth: int, a, floor_eps: float = 0.0, n: int | None = None) -> MetricGrid:
    """Weight on the unit square vanishing (or equal to ``floor_eps``) on the depth-k Cantor squares.

    Off the squares the weight is ``min(1, d_inf(x, C_k) / g1)`` with ``g1`` the
    first-level gap width, so it ramps continuously up to 1.
    """
    if floor_eps < 0:
        raise ValueError("floor_eps must be nonnegative")
    squares = cantor_squares(depth, a)
    if n is None:
        n = cantor_resolution(depth, a)
    for x0, y0, s in squares:
        for v in (x0, y0, s):
            if (v * n).denominator != 1:
                raise AlignmentError(f"resolution n={n} does not align depth-{depth} Cantor squares")
    h = 1.0 / n
    x, y = _cell_centers(n + 1, n + 1, h)
    inside = np.zeros(x.shape, dtype=bool)
    dist = np.full(x.shape, np.inf)
    for x0, y0, s in squares:
        i0, j0, m = int(y0 * n), int(x0 * n), int(s * n)
        inside[i0:i0 + m, j0:j0 + m] = True
        fx0, fy0, fs = float(x0), float(y0), float(s)
        dx = np.maximum(np.maximum(fx0 - x, x - (fx0 + fs)), 0.0)
        dy = np.maximum(np.maximum(fy0 - y, y - (fy0 + fs)), 0.0)
        dist = np.minimum(dist, np.maximum(dx, dy))
    a1 = _fractions(a)[0]
    gap = float(a1 / 2)
    w = np.minimum(1.0, dist / gap)
    w = np.maximum(w, floor_eps)
    w[inside] = floor_eps
    frac = sum(s * s for _, _, s in squares)
    meta = {"generator": "cantor", "depth": depth, "a": [str(v) for v in _fractions(a)],
            "floor_eps": floor_eps, "profile": "min(1, dist_inf/g1)", "gap": gap,
            "cantor_fraction": str(frac)}
    return make_weighted(w, h, meta)


def cantor_mask(grid: MetricGrid, depth: int, a) -> np.ndarray:
    """Cells of a unit-square grid lying inside the depth-``depth`` Cantor squares."""
    n = grid.cols - 1
    mask = np.zeros(grid.cell_shape, dtype=bool)
    for x0, y0, s in cantor_squares(depth, a):
        i0, j0, m = int(y0 * n), int(x0 * n), int(s * n)
        mask[i0:i0 + m, j0:j0 + m] = True
    return mask
