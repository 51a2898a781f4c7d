"""Conformal modulus of boundary path families by Dirichlet energy minimization.

Every cell contributes half of its conductance to each of its four edges:
a horizontal edge of cell ``c`` gets ``mu_c / (2 l_c^2)`` with ``mu_c`` the
cell's area factor (h^2 cancels) and ``l_c`` the cell norm of the unit
horizontal vector.  For conformal weights this is 1/2 wherever the weight is
positive and infinite (superconducting) where it vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .grid import Kind, MetricGrid, Quad
from .metric import DEFAULT_STENCIL, distance_field, node_index
from .network import DEFAULT_TOL, solve_network

PAIRS = {"13": (1, 3), "24": (2, 4)}


@dataclass
class QuadNetwork:
    kx: np.ndarray   # per-cell contribution to each horizontal edge
    ky: np.ndarray   # per-cell contribution to each vertical edge
    ch: np.ndarray   # horizontal edge conductances, shape (ni, nj-1)
    cv: np.ndarray   # vertical edge conductances, shape (ni-1, nj)
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def node_shape(self):
        return self.cv.shape[0] + 1, self.ch.shape[1] + 1


@dataclass
class Potential:
    u: np.ndarray                 # local node values, shape quad.node_shape
    quad: Quad
    from_edge: int
    to_edge: int
    dirichlet_zero: np.ndarray
    dirichlet_one: np.ndarray
    cluster: np.ndarray           # local representative node index per node
    energy: float
    iterations: int
    residual: float


@dataclass
class ModulusResult:
    value: float
    density: np.ndarray
    energy: float
    iterations: int
    residual: float
    potential: Potential | None = None


def cell_conductances(grid: MetricGrid, quad: Quad) -> tuple[np.ndarray, np.ndarray]:
    quad.check_inside(grid)
    cs = quad.cells()
    if grid.kind is Kind.CONFORMAL_WEIGHT:
        w = grid.weight[cs]
        k = np.where(w > 0, 0.5, np.inf)
        return k, k.copy()
    af = grid.area_factor[cs]
    lx = grid.norm_length((1, 0))[cs]
    ly = grid.norm_length((0, 1))[cs]
    return af / (2 * lx * lx), af / (2 * ly * ly)


def quad_network(grid: MetricGrid, quad: Quad) -> QuadNetwork:
    kx, ky = cell_conductances(grid, quad)
    ni, nj = quad.node_shape
    ch = np.zeros((ni, nj - 1))
    ch[:-1] += kx
    ch[1:] += kx
    cv = np.zeros((ni - 1, nj))
    cv[:, :-1] += ky
    cv[:, 1:] += ky
    idx = np.arange(ni * nj).reshape(ni, nj)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return QuadNetwork(kx, ky, ch, cv, a, b, np.concatenate([ch.ravel(), cv.ravel()]))


def _check_pair(from_edge: int, to_edge: int) -> None:
    if {from_edge, to_edge} not in ({1, 3}, {2, 4}):
        raise ValueError(f"edges {from_edge} and {to_edge} are not opposite")


def solve_dirichlet(grid: MetricGrid, quad: Quad, from_edge: int = 1, to_edge: int = 3,
                    tol: float = DEFAULT_TOL) -> Potential:
    """Discrete energy minimizer with ``u = 0`` on ``from_edge`` and ``u = 1`` on ``to_edge``.

    A reversed pair is solved in the canonical orientation and returned as
    ``1 - u``, so both orientations report bit-identical energies.
    """
    _check_pair(from_edge, to_edge)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if from_edge > to_edge:
        p = solve_dirichlet(grid, quad, to_edge, from_edge, tol)
        return Potential(1.0 - p.u, quad, from_edge, to_edge, p.dirichlet_one, p.dirichlet_zero,
                         p.cluster, p.energy, p.iterations, p.residual)
    net = quad_network(grid, quad)
    ni, nj = quad.node_shape
    zero, one = quad.side_mask(from_edge), quad.side_mask(to_edge)
    fixed = np.full((ni, nj), np.nan)
    fixed[zero] = 0.0
    fixed[one] = 1.0
    sol = solve_network(ni * nj, net.a, net.b, net.c, fixed.ravel(), tol=tol)
    return Potential(sol.potential.reshape(ni, nj), quad, from_edge, to_edge, zero, one,
                     sol.cluster.reshape(ni, nj), sol.energy, sol.iterations, sol.residual)


def cell_energy(net: QuadNetwork, u: np.ndarray) -> np.ndarray:
    """Energy carried by each cell; the cell energies sum to the network energy."""
    dxb, dxt = np.diff(u[:-1], axis=1), np.diff(u[1:], axis=1)
    dyl, dyr = np.diff(u[:, :-1], axis=0), np.diff(u[:, 1:], axis=0)

    def part(k, d):
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(k), 0.0, k * d * d)

    return part(net.kx, dxb) + part(net.kx, dxt) + part(net.ky, dyl) + part(net.ky, dyr)


def density_from_energy(grid: MetricGrid, quad: Quad, energy: np.ndarray) -> np.ndarray:
    mu = grid.cell_measure[quad.cells()]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(mu > 0, np.sqrt(energy / mu), 0.0)
    return rho


def modulus(grid: MetricGrid, quad: Quad, pair: str = "13", tol: float = DEFAULT_TOL) -> ModulusResult:
    """Modulus of the family joining ``zeta1, zeta3`` (``pair="13"``) or ``zeta2, zeta4``."""
    e0, e1 = PAIRS[str(pair)]
    pot = solve_dirichlet(grid, quad, e0, e1, tol)
    rho = density_from_energy(grid, quad, cell_energy(quad_network(grid, quad), pot.u))
    return ModulusResult(pot.energy, rho, pot.energy, pot.iterations, pot.residual, pot)


def dual_modulus(grid: MetricGrid, quad: Quad, tol: float = DEFAULT_TOL) -> ModulusResult:
    """Modulus of the family separating ``zeta1`` from ``zeta3``, on the dual network.

    Dual nodes are the quad's cells plus one terminal below ``zeta2`` and one above
    ``zeta4``; each primal edge not lying on ``zeta1`` or ``zeta3`` yields a dual edge
    of conductance ``1 / c_e``.
    """
    net = quad_network(grid, quad)
    ni, nj = quad.node_shape
    mi, mj = ni - 1, nj - 1
    cell = np.arange(mi * mj).reshape(mi, mj)
    south, north = mi * mj, mi * mj + 1
    with np.errstate(divide="ignore"):
        rh, rv = 1.0 / net.ch, 1.0 / net.cv
    a = [cell[:-1, :].ravel(), cell[0], cell[-1], cell[:, :-1].ravel()]
    b = [cell[1:, :].ravel(), np.full(mj, south), np.full(mj, north), cell[:, 1:].ravel()]
    c = [rh[1:-1].ravel(), rh[0], rh[-1], rv[:, 1:-1].ravel()]
    a, b, c = np.concatenate(a), np.concatenate(b), np.concatenate(c)
    fixed = np.full(mi * mj + 2, np.nan)
    fixed[south], fixed[north] = 0.0, 1.0
    sol = solve_network(mi * mj + 2, a, b, c, fixed, tol=tol, floating="zero")
    x = sol.potential
    e = c * (x[a] - x[b]) ** 2
    share = np.zeros(mi * mj + 2)
    terminal = b >= mi * mj
    np.add.at(share, a, np.where(terminal, e, 0.5 * e))
    np.add.at(share, b, np.where(terminal, 0.0, 0.5 * e))
    rho = density_from_energy(grid, quad, share[: mi * mj].reshape(mi, mj))
    return ModulusResult(sol.energy, rho, sol.energy, sol.iterations, sol.residual)


@dataclass
class AnnulusResult:
    value: float
    inner: np.ndarray
    outer: np.ndarray
    iterations: int
    residual: float


def annulus(grid: MetricGrid, center, r: float, R: float, tol: float = DEFAULT_TOL,
            stencil: int = DEFAULT_STENCIL) -> AnnulusResult:
    if not (grid.h < r < R / 2):
        raise ValueError(f"need h < r < R/2, got r={r}, R={R}, h={grid.h}")
    d = distance_field(grid, [node_index(grid, center)], stencil)
    inside = d < R
    if inside[0].any() or inside[-1].any() or inside[:, 0].any() or inside[:, -1].any():
        raise GeometryError(f"ball of radius {R} about {tuple(center)} escapes the grid")
    inner, outer = d <= r, d >= R
    net = quad_network(grid, Quad.full(grid))
    fixed = np.full(d.shape, np.nan)
    fixed[outer] = 0.0
    fixed[inner] = 1.0
    sol = solve_network(d.size, net.a, net.b, net.c, fixed.ravel(), tol=tol)
    return AnnulusResult(sol.energy, inner, outer, sol.iterations, sol.residual)


def annulus_modulus(grid: MetricGrid, center, r: float, R: float, tol: float = DEFAULT_TOL,
                    stencil: int = DEFAULT_STENCIL) -> float:
    """Modulus of paths joining the closed ball ``B(center, r)`` to the sphere ``S(center, R)``."""
    return annulus(grid, center, r, R, tol, stencil).value
