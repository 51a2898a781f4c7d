"""Brute-force modulus of tiny quads from the path constraints themselves.

The modulus of the node graph is ``min sum_e c_e rho_e^2`` over edge densities
with ``sum_{e in gamma} rho_e >= 1`` for every edge path ``gamma`` joining the
two sides.  The program is solved on an explicit constraint set: it starts from
all monotone lattice crossings, then repeatedly adds the shortest path in the
current density until none is shorter than 1.  Each round is a least-distance
problem, solved exactly through nonnegative least squares.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.optimize import nnls

from .grid import MetricGrid, Quad
from .modulus import PAIRS, quad_network

MAX_CELLS = 25
_FEAS = 1e-9


def monotone_paths(ni: int, nj: int) -> list[list[tuple[int, int]]]:
    """Node sequences crossing an ``ni x nj`` node lattice from column 0 to column ``nj-1``.

    Each path steps right, or vertically in one fixed direction, and makes no
    vertical step on the first or last column.
    """
    out = set()

    def walk(path, d):
        i, j = path[-1]
        if j == nj - 1:
            out.add(tuple(path))
            return
        walk(path + [(i, j + 1)], d)
        if j > 0 and 0 <= i + d < ni:
            walk(path + [(i + d, j)], d)

    for i in range(ni):
        for d in (1, -1):
            walk([(i, 0)], d)
    return [list(p) for p in sorted(out)]


def _least_distance(G: np.ndarray) -> np.ndarray:
    # min |x|^2 subject to G x >= 1 (Lawson-Hanson least-distance programming)
    m, n = G.shape
    E = np.vstack([G.T, np.ones((1, m))])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (n + m))
    r = E @ u - f
    if abs(r[-1]) < 1e-14:
        raise ArithmeticError("inconsistent path constraints")
    return -r[:n] / r[-1]


def _shortest(n, adj, sources, targets, length):
    dist = [math.inf] * n
    prev = [-1] * n
    heap = []
    for s in sources:
        dist[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    while heap:
        d, x = heapq.heappop(heap)
        if d > dist[x]:
            continue
        for y, e in adj[x]:
            nd = d + length[e]
            if nd < dist[y]:
                dist[y], prev[y] = nd, (x, e)
                heapq.heappush(heap, (nd, y))
    t = min(targets, key=lambda v: dist[v])
    edges, x = [], t
    while prev[x] != -1:
        x, e = prev[x]
        edges.append(e)
    return dist[t], edges


def modulus_oracle(grid: MetricGrid, quad: Quad, pair: str = "13", max_rounds: int = 500) -> float:
    """Modulus of a quad with at most 25 cells, independent of the Laplacian solver."""
    quad.check_inside(grid)
    if quad.n_cells > MAX_CELLS:
        raise ValueError(f"oracle is limited to {MAX_CELLS} cells, quad has {quad.n_cells}")
    e0, e1 = PAIRS[str(pair)]
    net = quad_network(grid, quad)
    ni, nj = quad.node_shape
    n = ni * nj
    a, b, c = net.a, net.b, net.c
    adj = [[] for _ in range(n)]
    for k in range(len(a)):
        adj[a[k]].append((b[k], k))
        adj[b[k]].append((a[k], k))
    sources = np.flatnonzero(quad.side_mask(e0).ravel()).tolist()
    targets = np.flatnonzero(quad.side_mask(e1).ravel()).tolist()

    shorted = np.isinf(c)
    var = np.flatnonzero(~shorted)
    col = np.full(len(c), -1)
    col[var] = np.arange(len(var))
    sqc = np.sqrt(c[var])
    eid = {}
    for k in range(len(a)):
        eid[(a[k], b[k])] = eid[(b[k], a[k])] = k

    rows = []

    def add(edges):
        row = np.zeros(len(var))
        for e in edges:
            if col[e] >= 0:
                row[col[e]] = 1.0
        if row.any():
            rows.append(row)
            return True
        return False

    if e0 in (1, 3):
        lattice = monotone_paths(ni, nj)
    else:
        lattice = [[(i, j) for j, i in p] for p in monotone_paths(nj, ni)]
    flip = (e0 == 3) or (e0 == 4)
    for p in lattice:
        if flip:
            p = p[::-1]
        add(eid[(p[k][0] * nj + p[k][1], p[k + 1][0] * nj + p[k + 1][1])] for k in range(len(p) - 1))

    length = np.zeros(len(c))
    for _ in range(max_rounds):
        if not rows:
            return math.inf
        A = np.array(rows) / sqc
        try:
            x = _least_distance(A)
        except ArithmeticError:
            return math.inf
        length[var] = x / sqc
        d, path = _shortest(n, adj, sources, targets, length)
        if d >= 1 - _FEAS:
            return float(x @ x)
        if not add(path):
            return math.inf
    raise RuntimeError("oracle constraint generation did not terminate")
