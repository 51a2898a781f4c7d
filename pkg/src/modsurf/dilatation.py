"""John ellipses of symmetric polygons and the per-cell dilatation bounds of norm fields.

The inscribed ellipse is ``E = {x : x^T P^-1 x <= 1}``; its support in a unit
direction ``n`` is ``sqrt(n^T P n)``, so inscription in the polygon is the set
of linear constraints ``n_i^T P n_i <= b_i^2`` and the area ``pi sqrt(det P)`` is
maximized over the three entries of ``P``.  The optimum is pinned by two or
three active constraints, so every such active set is solved in closed form
and the best feasible candidate kept; a log-barrier Newton method is the
fallback.

After the linear map ``P^-1/2`` the ellipse becomes the unit disk and the body
becomes ``C'``.  Writing ``R`` for the circumradius of ``C'`` (which equals the
containment ratio), the identity map from the normed plane to the Euclidean
plane then has Lipschitz constant ``L = R`` and Jacobian ``J = |C'| / pi``
against the Hausdorff measure of the norm.  The reported bounds are
``dilatation_bound = |C'| / pi`` and ``jacobian_bound = pi R^2 / |C'|``; both
lie in ``[1, 2]`` because ``B(0, 1) <= C' <= B(0, sqrt 2)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import norms
from .errors import DegenerateBodyError
from .grid import Kind, MetricGrid

NEWTON_TOL = 1e-10


@dataclass(frozen=True)
class JohnResult:
    matrix: np.ndarray          # P with E = {x : x^T P^-1 x <= 1}
    radius: float               # sqrt of the ellipse's semi-axis product, (det P)^(1/4)
    containment_ratio: float    # smallest lam with C inside lam * E
    lipschitz: float            # L of the normalized identity, = containment_ratio
    jacobian: float             # J of the normalized identity, |C'| / pi
    dilatation_bound: float     # |MD|^2 / J_H, equal to |C'| / pi
    jacobian_bound: float       # J_H / l^2, equal to pi R^2 / |C'|
    iterations: int

    @property
    def shape_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def _sym(p) -> np.ndarray:
    return np.array([[p[0], p[1]], [p[1], p[2]]])


def _logdet(p) -> float:
    d = p[0] * p[2] - p[1] ** 2
    return math.log(d) if d > 0 and p[0] > 0 else -math.inf


def _barrier(G: np.ndarray, h: np.ndarray, gap: float) -> tuple[np.ndarray, int]:
    p = np.array([0.5 * h.min(), 0.0, 0.5 * h.min()])
    m, t, iters = len(h), 1.0, 0

    def phi(q):
        sl = h - G @ q
        ld = _logdet(q)
        if np.any(sl <= 0) or ld == -math.inf:
            return math.inf
        return -t * ld - float(np.sum(np.log(sl)))

    while m / t > gap:
        for _ in range(50):
            iters += 1
            sl = h - G @ p
            det = p[0] * p[2] - p[1] ** 2
            # gradient and Hessian of -log det in (p11, p12, p22)
            u = np.array([p[2], -2 * p[1], p[0]])
            gd = -u / det
            Hd = np.outer(u, u) / det ** 2 - np.array([[0, 0, 1], [0, -2, 0], [1, 0, 0]]) / det
            grad = t * gd + G.T @ (1 / sl)
            H = t * Hd + G.T @ (G / (sl * sl)[:, None])
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            if dec / 2 < 1e-10:
                break
            a, f0 = 1.0, phi(p)
            while phi(p + a * step) > f0 - 0.25 * a * dec and a > 1e-12:
                a *= 0.5
            p = p + a * step
        t *= 50.0
    return p, iters


def _polish(G: np.ndarray, h: np.ndarray, p: np.ndarray) -> np.ndarray:
    # The optimum is pinned by two or three touching facet pairs; solve on them exactly.
    sl = (h - G @ p) / h
    order = np.argsort(sl)
    best, best_ld = p, _logdet(p)
    cand = []
    if len(h) >= 3 and sl[order[2]] < 1e-5:
        A = G[order[:3]]
        if abs(np.linalg.det(A)) > 1e-12:
            cand.append(np.linalg.solve(A, h[order[:3]]))
    if sl[order[1]] < 1e-5:
        A, r = G[order[:2]], h[order[:2]]
        p0 = np.linalg.lstsq(A, r, rcond=None)[0]
        w = np.linalg.svd(A)[2][-1]
        # det(p0 + tau w) = c0 + c1 tau + c2 tau^2
        c2 = w[0] * w[2] - w[1] ** 2
        c1 = p0[0] * w[2] + p0[2] * w[0] - 2 * p0[1] * w[1]
        if c2 < 0:
            cand.append(p0 - c1 / (2 * c2) * w)
    for q in cand:
        if np.all(G @ q <= h * (1 + 1e-10)) and _logdet(q) >= best_ld - 1e-9:
            best, best_ld = q, _logdet(q)
    return best


def _enumerate(G: np.ndarray, h: np.ndarray) -> np.ndarray | None:
    # The optimum has two or three active constraints: try every such set at once.
    m = len(h)
    cand = []
    if m >= 3:
        tri = np.array(list(itertools.combinations(range(m), 3)))
        A = G[tri]
        ok = np.abs(np.linalg.det(A)) > 1e-12
        if ok.any():
            cand.append(np.linalg.solve(A[ok], h[tri[ok]][..., None])[..., 0])
    pairs = np.array(list(itertools.combinations(range(m), 2)))
    A, r = G[pairs], h[pairs]
    w = np.cross(A[:, 0], A[:, 1])
    gram = A @ A.transpose(0, 2, 1)
    ok = np.abs(np.linalg.det(gram)) > 1e-12
    A, r, w = A[ok], r[ok], w[ok]
    p0 = np.einsum("kij,ki->kj", A, np.linalg.solve(gram[ok], r[..., None])[..., 0])
    # det(p0 + tau w) = c0 + c1 tau + c2 tau^2, maximized where concave
    c2 = w[:, 0] * w[:, 2] - w[:, 1] ** 2
    c1 = p0[:, 0] * w[:, 2] + p0[:, 2] * w[:, 0] - 2 * p0[:, 1] * w[:, 1]
    conc = c2 < 0
    cand.append(p0[conc] - (c1[conc] / (2 * c2[conc]))[:, None] * w[conc])
    P = np.concatenate(cand)
    det = P[:, 0] * P[:, 2] - P[:, 1] ** 2
    feas = np.all(P @ G.T <= h * (1 + 1e-10), axis=1) & (det > 0) & (P[:, 0] > 0)
    if not feas.any():
        return None
    return P[feas][np.argmax(det[feas])]


def _solve_john(n: np.ndarray, b: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    # Rows of G map (p11, p12, p22) to n^T P n.
    G = np.stack([n[:, 0] ** 2, 2 * n[:, 0] * n[:, 1], n[:, 1] ** 2], axis=1)
    scale = float(np.min(b)) ** 2
    h = b ** 2 / scale
    p = _enumerate(G, h)
    if p is not None:
        return _sym(p) * scale, 0
    p, iters = _barrier(G, h, 1e-7)
    p = _polish(G, h, p)
    return _sym(p) * scale, iters


def john_ellipse(body, tol: float = NEWTON_TOL) -> JohnResult:
    """Maximal-area ellipse inscribed in a centrally symmetric convex polygon.

    The polygon is first whitened by its vertex second-moment matrix; the
    problem is affine equivariant, so this only improves conditioning.
    """
    poly = norms.as_symmetric_polygon(body)
    w, V = np.linalg.eigh(poly.T @ poly / len(poly))
    if w.min() <= 0:
        raise DegenerateBodyError("polygon has zero area")
    W = V @ np.diag(w ** -0.5) @ V.T
    white = poly @ W.T
    n, b = norms.facets(white)
    half = len(poly) // 2
    Pw, iters = _solve_john(n[:half], b[:half], tol)
    Winv = V @ np.diag(w ** 0.5) @ V.T
    P = Winv @ Pw @ Winv.T
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)) or np.linalg.det(Pw) <= 0:
        raise DegenerateBodyError("inscribed ellipse collapsed")
    lam = float(np.sqrt(np.max(np.einsum("ij,jk,ik->i", white, np.linalg.inv(Pw), white))))
    area_c = norms.polygon_area(white) / math.sqrt(np.linalg.det(Pw))
    P.setflags(write=False)
    return JohnResult(P, float(np.linalg.det(P) ** 0.25), lam, lam, area_c / math.pi,
                      area_c / math.pi, math.pi * lam * lam / area_c, iters)


def normalized_body(body) -> np.ndarray:
    """The body mapped by ``P^-1/2`` so that its John ellipse is the unit disk."""
    res = john_ellipse(body)
    w, V = np.linalg.eigh(res.matrix)
    root_inv = V @ np.diag(w ** -0.5) @ V.T
    return np.asarray(norms.as_symmetric_polygon(body)) @ root_inv.T


def support_containment(body, res: JohnResult, directions: int = 720) -> tuple[float, float]:
    """Worst slack of ``E <= C <= lam E`` measured by support functions along sampled directions.

    Returns ``(max h_E - h_C, max h_C - lam h_E)``; both should be <= 0 up to round-off.
    """
    poly = norms.as_symmetric_polygon(body)
    th = 2 * math.pi * np.arange(directions) / directions
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    hE = np.sqrt(np.einsum("ij,jk,ik->i", d, res.matrix, d))
    hC = np.max(d @ poly.T, axis=1)
    return float(np.max(hE - hC)), float(np.max(hC - res.containment_ratio * hE))


@dataclass
class CellDilatation:
    dilatation_bound: np.ndarray   # per cell
    jacobian_bound: np.ndarray
    lipschitz: np.ndarray
    jacobian: np.ndarray
    degenerate: np.ndarray         # per-cell flag

    @property
    def max_ratio(self) -> float:
        ok = ~self.degenerate
        if not ok.any():
            return math.nan
        return float(max(self.dilatation_bound[ok].max(), self.jacobian_bound[ok].max()))


def norm_field_dilatation(grid: MetricGrid) -> CellDilatation:
    """John normalization of every cell's norm ball and the two resulting bounds."""
    if grid.kind is not Kind.NORM_FIELD:
        raise ValueError("norm_field_dilatation needs a NormField grid")
    k = len(grid.balls)
    vals = np.full((4, k), np.nan)
    bad = np.zeros(k, dtype=bool)
    for i, ball in enumerate(grid.balls):
        try:
            r = john_ellipse(ball)
        except DegenerateBodyError:
            bad[i] = True
            continue
        vals[:, i] = (r.dilatation_bound, r.jacobian_bound, r.lipschitz, r.jacobian)
    idx = grid.ball_index
    return CellDilatation(vals[0][idx], vals[1][idx], vals[2][idx], vals[3][idx], bad[idx])
