"""Planar norms given by centrally symmetric convex polygons.

A norm is stored as the vertex list of its unit ball, counter-clockwise.
Norm evaluation uses the facet form of the ball: ``N(z) = max_i n_i.z / b_i``
where ``n_i`` is the outward unit normal of facet ``i`` and ``b_i > 0`` its
distance from the origin.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DegenerateBodyError

_SYM_TOL = 1e-9


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def as_symmetric_polygon(vertices) -> np.ndarray:
    """Validate a centrally symmetric convex polygon and return it CCW as float array."""
    poly = np.asarray(vertices, dtype=float).reshape(-1, 2)
    k = len(poly)
    if k < 4 or k % 2:
        raise DegenerateBodyError(f"need an even number >= 4 of vertices, got {k}")
    area = polygon_area(poly)
    if area < 0:
        poly = poly[::-1].copy()
        area = -area
    scale = float(np.max(np.abs(poly)))
    if not np.isfinite(area) or scale == 0 or area <= 1e-14 * scale * scale:
        raise DegenerateBodyError("polygon has zero area")
    half = k // 2
    if np.max(np.abs(poly[half:] + poly[:half])) > _SYM_TOL * scale:
        raise DegenerateBodyError("polygon is not centrally symmetric about the origin")
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross <= 0):
        raise DegenerateBodyError("polygon is not strictly convex")
    poly.setflags(write=False)
    return poly


def facets(poly: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit normals and support offsets of each polygon edge."""
    e = np.roll(poly, -1, axis=0) - poly
    n = np.stack([e[:, 1], -e[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1)[:, None]
    b = np.einsum("ij,ij->i", n, poly)
    return n, b


def gauge(poly: np.ndarray, z) -> np.ndarray:
    """Norm of vectors ``z`` (shape ``(..., 2)``) whose unit ball is ``poly``."""
    n, b = facets(poly)
    z = np.asarray(z, dtype=float)
    return np.max(np.tensordot(z, n.T, axes=1) / b, axis=-1)


def dual_gauge(poly: np.ndarray, xi) -> np.ndarray:
    """Dual norm ``sup_{N(z)<=1} xi.z``, attained at a vertex."""
    xi = np.asarray(xi, dtype=float)
    return np.max(np.tensordot(xi, poly.T, axes=1), axis=-1)


def area_factor(poly: np.ndarray) -> float:
    """Ratio of Hausdorff 2-measure in the norm to Lebesgue measure, pi/|ball|."""
    return math.pi / polygon_area(poly)


def regular_polygon(n: int, radius: float = 1.0, phase: float = 0.0) -> np.ndarray:
    t = phase + 2 * math.pi * np.arange(n) / n
    return as_symmetric_polygon(radius * np.stack([np.cos(t), np.sin(t)], axis=1))


def linf_ball(rotation: float = 0.0) -> np.ndarray:
    """Unit ball of the max norm, optionally rotated counter-clockwise by ``rotation``."""
    sq = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]])
    if rotation:
        c, s = math.cos(rotation), math.sin(rotation)
        sq = sq @ np.array([[c, s], [-s, c]])
    return as_symmetric_polygon(sq)


def random_symmetric_polygon(rng: np.random.Generator, pairs: int = 3) -> np.ndarray:
    """Random centrally symmetric convex polygon with at most ``2*pairs`` vertices."""
    while True:
        ang = rng.uniform(0.0, math.pi, size=pairs)
        rad = rng.uniform(0.2, 1.0, size=pairs)
        pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        pts = np.vstack([pts, -pts])
        try:
            hull = ConvexHull(pts)
        except Exception:
            continue
        ring = pts[hull.vertices]
        try:
            return as_symmetric_polygon(_symmetrize_order(ring))
        except DegenerateBodyError:
            continue


def _symmetrize_order(ring: np.ndarray) -> np.ndarray:
    # Rotate the hull ring so that vertex i+k is the antipode of vertex i.
    ang = np.arctan2(ring[:, 1], ring[:, 0])
    start = int(np.argmin(np.where(ang >= 0, ang, np.inf)))
    return np.roll(ring, -start, axis=0)
