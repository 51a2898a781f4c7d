"""Path metric, Hausdorff measure and ball-mass estimates on a metric grid.

The path metric is the shortest-path distance in the lattice graph whose edges
join each node to its neighbours in a 4-, 8- or 16-point stencil.  An edge's
length is the line integral of the cellwise norm along the straight segment;
a segment lying on a cell boundary takes the mean of the two adjacent cells.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .grid import MetricGrid

DEFAULT_STENCIL = 16

# offset (di, dj) -> cells crossed, as (cell di, cell dj, fraction of the segment)
_SEGMENTS = {
    (0, 1): [(-1, 0, 0.5), (0, 0, 0.5)],
    (1, 0): [(0, -1, 0.5), (0, 0, 0.5)],
    (1, 1): [(0, 0, 1.0)],
    (1, -1): [(0, -1, 1.0)],
    (1, 2): [(0, 0, 0.5), (0, 1, 0.5)],
    (2, 1): [(0, 0, 0.5), (1, 0, 0.5)],
    (1, -2): [(0, -1, 0.5), (0, -2, 0.5)],
    (2, -1): [(0, -1, 0.5), (1, -1, 0.5)],
}
_STENCILS = {4: [(0, 1), (1, 0)], 8: [(0, 1), (1, 0), (1, 1), (1, -1)], 16: list(_SEGMENTS)}


def node_index(grid: MetricGrid, node) -> int:
    i, j = node
    if not (0 <= i < grid.rows and 0 <= j < grid.cols):
        raise IndexError(f"node {node} outside a {grid.rows}x{grid.cols} grid")
    return i * grid.cols + j


@functools.lru_cache(maxsize=32)
def metric_edges(grid: MetricGrid, stencil: int = DEFAULT_STENCIL):
    """Undirected edge list ``(src, dst, length)`` of the metric graph."""
    if stencil not in _STENCILS:
        raise ValueError(f"stencil must be one of {sorted(_STENCILS)}")
    R, C = grid.rows, grid.cols
    I, J = np.meshgrid(np.arange(R), np.arange(C), indexing="ij")
    srcs, dsts, lens = [], [], []
    for di, dj in _STENCILS[stencil]:
        ok = (I + di < R) & (J + dj >= 0) & (J + dj < C)
        i, j = I[ok], J[ok]
        nl = np.pad(grid.norm_length((dj, di)) * grid.h, 2, constant_values=np.nan)
        total = np.zeros(i.shape)
        wsum = np.zeros(i.shape)
        for ci, cj, frac in _SEGMENTS[(di, dj)]:
            v = nl[i + ci + 2, j + cj + 2]
            have = ~np.isnan(v)
            total += np.where(have, frac * v, 0.0)
            wsum += np.where(have, frac, 0.0)
        srcs.append(i * C + j)
        dsts.append((i + di) * C + (j + dj))
        lens.append(total / wsum)
    src, dst, ln = np.concatenate(srcs), np.concatenate(dsts), np.concatenate(lens)
    for a in (src, dst, ln):
        a.setflags(write=False)
    return src, dst, ln


@functools.lru_cache(maxsize=32)
def _quotient(grid: MetricGrid, stencil: int):
    # Zero-length edges are contracted: scipy's graph routines drop explicit zeros.
    src, dst, ln = metric_edges(grid, stencil)
    n = grid.n_nodes
    zero = ln == 0
    if zero.any():
        g = coo_matrix((np.ones(zero.sum()), (src[zero], dst[zero])), shape=(n, n))
        m, comp = connected_components(g, directed=False)
    else:
        m, comp = n, np.arange(n)
    a, b, w = comp[src[~zero]], comp[dst[~zero]], ln[~zero]
    keep = a != b
    a, b, w = a[keep], b[keep], w[keep]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    graph = coo_matrix((w[first], (lo[first], hi[first])), shape=(m, m)).tocsr()
    return graph, comp


def distance_field(grid: MetricGrid, sources, stencil: int = DEFAULT_STENCIL) -> np.ndarray:
    """Path-metric distance from the nearest of ``sources`` (linear node indices) to every node."""
    graph, comp = _quotient(grid, stencil)
    src = np.unique(comp[np.atleast_1d(np.asarray(sources, dtype=int))])
    d = dijkstra(graph, directed=False, indices=src, min_only=True)
    return d[comp].reshape(grid.rows, grid.cols)


def all_node_distances(grid: MetricGrid, stencil: int = DEFAULT_STENCIL) -> np.ndarray:
    """Dense ``n_nodes x n_nodes`` distance matrix; meant for small grids."""
    graph, comp = _quotient(grid, stencil)
    d = dijkstra(graph, directed=False)
    return d[np.ix_(comp, comp)]


def path_metric_distance(grid: MetricGrid, a, b, stencil: int = DEFAULT_STENCIL) -> float:
    ia, ib = node_index(grid, a), node_index(grid, b)
    return float(distance_field(grid, [ia], stencil).ravel()[ib])


def cell_distance(node_dist: np.ndarray) -> np.ndarray:
    """Per-cell distance from a node distance field: mean over the four corners."""
    d = node_dist
    return 0.25 * (d[:-1, :-1] + d[1:, :-1] + d[:-1, 1:] + d[1:, 1:])


def hausdorff_measure(grid: MetricGrid, cells) -> float:
    """Hausdorff 2-measure of a set of cells (boolean mask or iterable of ``(i, j)``)."""
    mu = grid.cell_measure
    cells = np.asarray(cells) if not isinstance(cells, np.ndarray) else cells
    if cells.dtype == bool:
        return float(mu[cells].sum())
    if cells.size == 0:
        return 0.0
    idx = np.asarray(cells, dtype=int).reshape(-1, 2)
    return float(mu[idx[:, 0], idx[:, 1]].sum())


@dataclass
class BallScan:
    c_u: float
    table: list  # (center node, radius, mass / radius^2)

    def ratios_at(self, center) -> list[tuple[float, float]]:
        return [(r, q) for c, r, q in self.table if c == tuple(center)]


def default_centers(grid: MetricGrid, per_side: int = 9) -> list[tuple[int, int]]:
    ii = np.unique(np.linspace(0, grid.rows - 1, per_side).round().astype(int))
    jj = np.unique(np.linspace(0, grid.cols - 1, per_side).round().astype(int))
    return [(int(i), int(j)) for i in ii for j in jj]


def ball_mass_scan(grid: MetricGrid, radii, centers=None, stencil: int = DEFAULT_STENCIL) -> BallScan:
    """Estimate the mass-bound constant ``sup H^2(B(x, r)) / r^2`` over sampled balls."""
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("need at least one radius")
    if any(r <= grid.h for r in radii):
        raise ValueError("radii must exceed the cell side")
    if centers is None:
        centers = default_centers(grid)
    mu = grid.cell_measure
    table = []
    for c in centers:
        c = (int(c[0]), int(c[1]))
        dc = cell_distance(distance_field(grid, [node_index(grid, c)], stencil))
        for r in radii:
            table.append((c, r, float(mu[dc < r].sum()) / (r * r)))
    return BallScan(max(q for _, _, q in table), table)


def mass_blowup(scan: BallScan, factor: float = 1.5) -> list[tuple[int, int]]:
    """Centers whose mass ratio grows monotonically as the radius shrinks, by at least ``factor``.

    That growth signals a failure of the quadratic mass bound at that center.
    """
    out = []
    for c in sorted({c for c, _, _ in scan.table}):
        prof = sorted(scan.ratios_at(c))
        q = [v for _, v in prof]
        if len(q) >= 2 and all(a > b for a, b in zip(q, q[1:])) and q[0] >= factor * q[-1]:
            out.append(c)
    return out
