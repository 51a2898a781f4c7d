"""Resistor networks with Dirichlet terminals.

Edges carry conductances, possibly infinite.  Infinite (superconducting) edges
are contracted before the solve; each merged cluster is represented by its
smallest node index.  The reduced Laplacian system is solved with
Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateGeometryError, SolverError

DEFAULT_TOL = 1e-10


@dataclass
class NetworkSolution:
    potential: np.ndarray      # per original node
    cluster: np.ndarray        # per original node, representative node index
    energy: float
    iterations: int
    residual: float


def pcg(A: csr_matrix, b: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int | None = None,
        x0: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned CG. Returns ``(x, iterations, relative residual)``."""
    n = A.shape[0]
    if max_iter is None:
        max_iter = 50 * max(n, 1)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SolverError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})",
                              residual=res, iterations=it)
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it, res


def merge_clusters(n: int, a: np.ndarray, b: np.ndarray, cond: np.ndarray) -> np.ndarray:
    """Representative (minimum index) of each node's superconducting cluster."""
    inf = np.isinf(cond)
    if not inf.any():
        return np.arange(n)
    g = coo_matrix((np.ones(inf.sum()), (a[inf], b[inf])), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    rep = np.full(lab.max() + 1, n)
    np.minimum.at(rep, lab, np.arange(n))
    return rep[lab]


def solve_network(n: int, a, b, cond, fixed: np.ndarray, tol: float = DEFAULT_TOL,
                  floating: str = "error") -> NetworkSolution:
    """Minimize ``sum c_e (x_a - x_b)^2`` with ``x = fixed`` where ``fixed`` is not NaN.

    ``floating`` decides what happens to components with no fixed node:
    ``"error"`` raises, ``"zero"`` sets them to 0.
    """
    a, b = np.asarray(a), np.asarray(b)
    cond = np.asarray(cond, dtype=float)
    if np.any(cond < 0) or np.any(np.isnan(cond)):
        raise ValueError("conductances must be nonnegative")
    rep = merge_clusters(n, a, b, cond)

    val = np.full(n, np.nan)
    has = ~np.isnan(fixed)
    for r in np.unique(rep[has]):
        v = fixed[has & (rep == r)]
        if np.ptp(v) > 0:
            raise DegenerateGeometryError(
                f"superconducting cluster at node {r} joins terminals with different values")
    val[rep[has]] = fixed[has]

    fin = np.isfinite(cond) & (cond > 0)
    ra, rb, c = rep[a[fin]], rep[b[fin]], cond[fin]
    keep = ra != rb
    ra, rb, c = ra[keep], rb[keep], c[keep]

    roots = np.unique(rep)
    pos = np.full(n, -1)
    pos[roots] = np.arange(len(roots))
    m = len(roots)
    pa, pb = pos[ra], pos[rb]
    W = coo_matrix((np.concatenate([c, c]), (np.concatenate([pa, pb]), np.concatenate([pb, pa]))),
                   shape=(m, m)).tocsr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    rv = val[roots]
    is_fixed = ~np.isnan(rv)

    ncomp, comp = connected_components(W, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    anchored[comp[is_fixed]] = True
    floating_nodes = ~anchored[comp]
    if floating_nodes.any():
        if floating == "error":
            raise DegenerateGeometryError(
                f"{int(floating_nodes.sum())} network nodes are disconnected from every terminal")
        rv[floating_nodes] = 0.0
        is_fixed = is_fixed | floating_nodes

    free = ~is_fixed
    x = np.where(is_fixed, rv, 0.0)
    it, res = 0, 0.0
    if free.any():
        L = (csr_matrix((deg, (np.arange(m), np.arange(m))), shape=(m, m)) - W).tocsr()
        Lff = L[free][:, free]
        rhs = -(L[free][:, is_fixed] @ x[is_fixed])
        xf, it, res = pcg(Lff.tocsr(), rhs, tol=tol)
        x[free] = xf
    energy = float(np.sum(c * (x[pa] - x[pb]) ** 2))
    return NetworkSolution(x[pos[rep]], rep, energy, it, res)
