"""The uniformizing map f = (u, v) of a quad and the identities it satisfies.

``u`` is the discrete energy minimizer joining zeta1 (u = 0) to zeta3 (u = 1).
Its conjugate ``v`` is the flux potential: on the dual graph (cells plus one
terminal below zeta2 and one above zeta4) the jump of ``v`` across a primal edge
equals the current ``c_e du`` through it.  Because the current is divergence
free at every interior node, the sum along any dual path depends only on its
endpoints, and ``v`` runs from 0 on zeta2 to ``M1`` on zeta4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order
from scipy.spatial import cKDTree
from skimage.measure import find_contours

from .errors import DegenerateBandError, HarmonicityError, OrientationError, ResolutionError
from .grid import MetricGrid, Quad
from .modulus import Potential, cell_energy, density_from_energy, quad_network

FLUX_TOL = 1e-8


@dataclass
class UniformizingMap:
    u: Potential
    v: np.ndarray            # per local node
    m1: float                # height of the target rectangle
    quad: Quad
    face_v: np.ndarray       # per cell, NaN where the cell is superconducting
    cell_mass: np.ndarray    # rho^2 mu per cell
    density: np.ndarray

    def cell_image(self) -> tuple[np.ndarray, np.ndarray]:
        """Image of each cell center: corner averages of ``u`` and ``v``."""
        return _corner_mean(self.u.u), _corner_mean(self.v)

    def negated(self) -> "UniformizingMap":
        p = self.u
        flipped = Potential(-p.u, p.quad, p.from_edge, p.to_edge, p.dirichlet_zero,
                            p.dirichlet_one, p.cluster, p.energy, p.iterations, p.residual)
        return UniformizingMap(flipped, -self.v, self.m1, self.quad, -self.face_v,
                               self.cell_mass, self.density)


def _corner_mean(a: np.ndarray) -> np.ndarray:
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


def _node_u(u) -> np.ndarray:
    return u.u.u if isinstance(u, UniformizingMap) else u.u


def edge_currents(grid: MetricGrid, quad: Quad, U: np.ndarray):
    """Currents ``c_e du`` on horizontal and vertical edges; NaN on superconducting edges."""
    net = quad_network(grid, quad)
    with np.errstate(invalid="ignore"):
        ih = np.where(np.isinf(net.ch), np.nan, net.ch * np.diff(U, axis=1))
        jv = np.where(np.isinf(net.cv), np.nan, net.cv * np.diff(U, axis=0))
    return net, ih, jv


def conjugate(grid: MetricGrid, quad: Quad, u: Potential, tol: float = FLUX_TOL) -> UniformizingMap:
    """Flux conjugate of a zeta1 -> zeta3 potential.

    Raises ``HarmonicityError`` when the flux sums disagree around some dual
    cycle by more than ``tol * max(1, M1)``.
    """
    if (u.from_edge, u.to_edge) != (1, 3):
        raise ValueError("conjugate expects the zeta1 -> zeta3 potential")
    U = u.u
    net, ih, jv = edge_currents(grid, quad, U)
    ni, nj = U.shape
    mi, mj = ni - 1, nj - 1
    cell = np.arange(mi * mj).reshape(mi, mj)
    S, N = mi * mj, mi * mj + 1

    # v(to) - v(from) = jump
    below = np.vstack([np.full((1, mj), S), cell])
    above = np.vstack([cell, np.full((1, mj), N)])
    frm = [below.ravel(), cell[:, :-1].ravel()]
    to = [above.ravel(), cell[:, 1:].ravel()]
    jump = [ih.ravel(), -jv[:, 1:-1].ravel()]
    frm, to, jump = np.concatenate(frm), np.concatenate(to), np.concatenate(jump)
    ok = ~np.isnan(jump)
    frm, to, jump = frm[ok], to[ok], jump[ok]

    n = mi * mj + 2
    eidx = np.arange(1, len(frm) + 1)
    K = coo_matrix((np.concatenate([eidx, -eidx]), (np.concatenate([frm, to]), np.concatenate([to, frm]))),
                   shape=(n, n)).tocsr()
    order, pred = breadth_first_order(csr_matrix((np.ones(K.nnz), K.indices, K.indptr), shape=(n, n)),
                                      S, directed=False, return_predecessors=True)
    fv = np.full(n, np.nan)
    fv[S] = 0.0
    if len(order) > 1:
        kids = order[1:]
        k = np.asarray(K[pred[kids], kids]).ravel()
        step = np.where(k > 0, jump[np.abs(k) - 1], -jump[np.abs(k) - 1])
        for x, p, s in zip(kids.tolist(), pred[kids].tolist(), step.tolist()):
            fv[x] = fv[p] + s

    m1 = float(u.energy)
    scale = max(1.0, m1)
    both = ~np.isnan(fv[frm]) & ~np.isnan(fv[to])
    mism = np.abs(fv[to[both]] - fv[frm[both]] - jump[both])
    if mism.size and mism.max() > tol * scale:
        raise HarmonicityError(f"flux mismatch {mism.max():.3e} around a dual cycle",
                               residual=float(mism.max()))
    if np.isnan(fv[N]) or abs(fv[N] - m1) > tol * scale:
        raise HarmonicityError(f"total flux {fv[N]:.12g} differs from the energy {m1:.12g}",
                               residual=float(abs(fv[N] - m1)))

    face = fv[: mi * mj].reshape(mi, mj)
    v = _faces_to_nodes(face, m1)
    v = _settle_clusters(v, u.cluster, m1)
    E = cell_energy(net, U)
    return UniformizingMap(u, v, m1, quad, face, E, density_from_energy(grid, quad, E))


def _faces_to_nodes(face: np.ndarray, m1: float) -> np.ndarray:
    # Ghost faces: reflection through v = 0 below zeta2 and v = M1 above zeta4,
    # copies beside zeta1 and zeta3.
    mi, mj = face.shape
    F = np.full((mi + 2, mj + 2), np.nan)
    F[1:-1, 1:-1] = face
    F[0, 1:-1] = -face[0]
    F[-1, 1:-1] = 2 * m1 - face[-1]
    F[:, 0] = F[:, 1]
    F[:, -1] = F[:, -2]
    stack = np.stack([F[:-1, :-1], F[1:, :-1], F[:-1, 1:], F[1:, 1:]])
    cnt = np.sum(~np.isnan(stack), axis=0)
    tot = np.nansum(stack, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, tot / cnt, np.nan)


def _settle_clusters(v: np.ndarray, cluster: np.ndarray, m1: float) -> np.ndarray:
    v = v.copy()
    flat, lab = v.ravel(), cluster.ravel()
    ni, nj = v.shape
    rows = np.arange(v.size) // nj
    for r in np.unique(lab[np.bincount(lab, minlength=lab.size)[lab] > 1]):
        members = lab == r
        if np.any(rows[members] == 0):
            flat[members] = 0.0
        elif np.any(rows[members] == ni - 1):
            flat[members] = m1
        else:
            vals = flat[members]
            flat[members] = np.nanmean(vals) if np.any(~np.isnan(vals)) else np.nan
    v = flat.reshape(ni, nj)
    while np.isnan(v).any():
        P = np.pad(v, 1, constant_values=np.nan)
        nb = np.stack([P[:-2, 1:-1], P[2:, 1:-1], P[1:-1, :-2], P[1:-1, 2:]])
        cnt = np.sum(~np.isnan(nb), axis=0)
        if not np.any(np.isnan(v) & (cnt > 0)):
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            fill = np.nansum(nb, axis=0) / cnt
        v = np.where(np.isnan(v) & (cnt > 0), fill, v)
    return v


def flux_across_level(grid: MetricGrid, quad: Quad, u, s: float) -> float:
    """Total current through the edges separating ``{u < s}`` from ``{u >= s}``."""
    U = _node_u(u)
    net = quad_network(grid, quad)
    ua, ub = U.ravel()[net.a], U.ravel()[net.b]
    cut = (np.minimum(ua, ub) < s) & (np.maximum(ua, ub) >= s)
    return float(np.sum(net.c[cut] * np.abs(ua[cut] - ub[cut])))


class BandCheck(NamedTuple):
    lhs: float
    rhs: float
    relative_error: float


def _cell_mass(grid, quad, u):
    if isinstance(u, UniformizingMap):
        return u.cell_mass, u.u.u, u.u.energy
    net = quad_network(grid, quad)
    return cell_energy(net, u.u), u.u, u.energy


def _below_fraction(a, b, c, tau):
    # Area fraction of a triangle where a linear function with vertex values a, b, c is < tau.
    lo, mid, hi = np.sort(np.stack([a, b, c]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = (tau - lo) ** 2 / ((mid - lo) * (hi - lo))
        f2 = 1 - (hi - tau) ** 2 / ((hi - lo) * (hi - mid))
    f = np.where(tau <= lo, 0.0, np.where(tau >= hi, 1.0, np.where(tau <= mid, f1, f2)))
    return np.nan_to_num(f, nan=0.0)


def band_fraction(U: np.ndarray, s: float, t: float) -> np.ndarray:
    """Fraction of each cell where ``s < u < t``, with ``u`` linear on the two halves of the cell."""
    ll, lr, ul, ur = U[:-1, :-1], U[:-1, 1:], U[1:, :-1], U[1:, 1:]
    out = np.zeros(ll.shape)
    for tri in ((ll, lr, ur), (ll, ur, ul)):
        out += 0.5 * (_below_fraction(*tri, t) - _below_fraction(*tri, s))
    return out


def dividing_modulus_check(grid: MetricGrid, quad: Quad, u, s: float, t: float,
                           membership: str = "fraction") -> BandCheck:
    """Compare ``(t-s)^-2 * mass(s < u < t)`` with ``M1 / (t-s)``.

    ``membership="fraction"`` weights each cell by the area where ``s < u < t``
    for the piecewise linear ``u``; ``"center"`` counts a cell when the mean of
    its corner values lies in the band.
    """
    if not 0 <= s < t <= 1:
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    E, U, m1 = _cell_mass(grid, quad, u)
    if membership == "fraction":
        w = band_fraction(U, s, t)
    elif membership == "center":
        ubar = _corner_mean(U)
        w = ((ubar > s) & (ubar < t)).astype(float)
    else:
        raise ValueError(f"unknown membership rule {membership!r}")
    if not w.any():
        raise DegenerateBandError(f"no cell has s < u < t for (s, t) = ({s}, {t})")
    lhs = float(np.sum(E * w)) / (t - s) ** 2
    rhs = m1 / (t - s)
    return BandCheck(lhs, rhs, abs(lhs - rhs) / abs(rhs))


def dyadic_scale(m1: float) -> tuple[int, float]:
    """``(k0, m)`` with ``m * 2**k0 = m1`` and ``1/2 < m <= 1``."""
    if not m1 > 0 or not math.isfinite(m1):
        raise ValueError("M1 must be positive and finite")
    mant, e = math.frexp(m1)
    if mant == 0.5:
        return e - 1, 1.0
    return e, mant


def dyadic_masses(fmap: UniformizingMap, k: int, min_cells: int = 16):
    """Mass of each dyadic preimage ``f^-1 R(i, j, k)`` and the predicted ``2^-2k m``.

    Returns ``(masses, expected)`` with ``masses`` indexed ``[i, j]``.
    """
    k0, m = dyadic_scale(fmap.m1)
    kmin = max(0, -k0)
    if k < kmin:
        raise ValueError(f"k must be at least {kmin} for M1 = {fmap.m1}")
    ni_r, nj_r = 2 ** k, 2 ** (k + k0)
    x, y = fmap.cell_image()
    i = np.clip(np.floor(x * ni_r).astype(int), 0, ni_r - 1)
    j = np.clip(np.floor(y / (m * 2.0 ** -k)).astype(int), 0, nj_r - 1)
    flat = (i * nj_r + j).ravel()
    counts = np.bincount(flat, minlength=ni_r * nj_r)
    if counts.min() < min_cells:
        raise ResolutionError(f"a dyadic preimage at k={k} holds only {counts.min()} cells")
    masses = np.bincount(flat, weights=fmap.cell_mass.ravel(), minlength=ni_r * nj_r)
    return masses.reshape(ni_r, nj_r), 4.0 ** -k * m


def dyadic_mass_check(grid: MetricGrid, quad: Quad, fmap: UniformizingMap, k: int,
                      min_cells: int = 16) -> float:
    """Worst relative deviation of a dyadic preimage mass from ``2^-2k m``."""
    masses, expected = dyadic_masses(fmap, k, min_cells)
    return float(np.max(np.abs(masses - expected)) / expected)


def change_of_variables_check(grid: MetricGrid, quad: Quad, fmap: UniformizingMap,
                              g: Callable, mesh: int = 256) -> BandCheck:
    """Integral of ``g`` over the target rectangle against its pullback ``sum g(f(c)) rho^2 mu``."""
    m1 = fmap.m1
    t = (np.arange(mesh) + 0.5) / mesh
    Y1, Y2 = np.meshgrid(t, t * m1, indexing="ij")
    image = float(np.sum(np.broadcast_to(g(Y1, Y2), Y1.shape))) * m1 / mesh ** 2
    x, y = fmap.cell_image()
    pull = float(np.sum(np.broadcast_to(g(x, y), x.shape) * fmap.cell_mass))
    scale = max(abs(image), abs(pull))
    return BandCheck(image, pull, 0.0 if scale == 0 else abs(image - pull) / scale)


def boundary_loop(quad: Quad) -> list[tuple[int, int]]:
    """Local boundary nodes in counter-clockwise order, starting at the zeta1/zeta2 corner."""
    ni, nj = quad.node_shape
    loop = [(0, j) for j in range(nj)]
    loop += [(i, nj - 1) for i in range(1, ni)]
    loop += [(ni - 1, j) for j in range(nj - 2, -1, -1)]
    loop += [(i, 0) for i in range(ni - 2, 0, -1)]
    return loop


def winding_number(fmap: UniformizingMap) -> int:
    """Winding of the boundary image around the center of ``[0,1] x [0,M1]``."""
    loop = boundary_loop(fmap.quad)
    idx = tuple(np.array(loop).T)
    px = fmap.u.u[idx] - 0.5
    py = fmap.v[idx] - 0.5 * fmap.m1
    ang = np.arctan2(py, px)
    d = np.diff(np.append(ang, ang[0]))
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return int(round(d.sum() / (2 * np.pi)))


def degree_check(fmap: UniformizingMap, strict: bool = False, tol: float = 1e-12) -> bool:
    """Boundary winding number 1 and injectivity on nodes up to merged clusters.

    With ``strict`` a wrong winding raises ``OrientationError`` instead of
    returning False.
    """
    w = winding_number(fmap)
    if w != 1:
        if strict:
            raise OrientationError(f"boundary image winds {w} times around the target")
        return False
    U, V = fmap.u.u.ravel(), fmap.v.ravel()
    reps = np.unique(fmap.u.cluster.ravel(), return_index=True)[1]
    pts = np.stack([U[reps], V[reps]], axis=1)
    return len(cKDTree(pts).query_pairs(tol)) == 0


def level_polylines(fmap: UniformizingMap, t: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Level curves ``u = t`` as local (row, col) points, oriented from zeta2 toward zeta4, with ``v`` along them."""
    out = []
    for pts in find_contours(fmap.u.u, t):
        if pts[-1, 0] < pts[0, 0]:
            pts = pts[::-1]
        vals = map_coordinates(fmap.v, pts.T, order=1)
        out.append((pts, vals))
    return out


def level_curve_monotone(fmap: UniformizingMap, t: float, tol: float = 1e-9) -> bool:
    """``v`` is nondecreasing along every level curve of ``u``."""
    return all(np.all(np.diff(vals) >= -tol * max(1.0, fmap.m1)) for _, vals in level_polylines(fmap, t))
