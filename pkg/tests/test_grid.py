import math
from fractions import Fraction

import numpy as np
import pytest

from modsurf import grid as G
from modsurf.errors import AlignmentError, GeometryError, InvalidDimensionError


def test_constant_weight_grid():
    g = G.make_euclidean(3, 3, 1.0)
    assert g.cell_shape == (2, 2)
    assert np.all(g.weight == 1.0)


def test_single_cell_measure():
    g = G.make_euclidean(2, 2, 0.5)
    assert g.cell_measure.shape == (1, 1)
    assert g.cell_measure[0, 0] == 0.25


@pytest.mark.parametrize("rows, cols", [(1, 3), (3, 1), (0, 0)])
def test_dimension_below_two(rows, cols):
    with pytest.raises(InvalidDimensionError):
        G.make_euclidean(rows, cols, 0.1)


def test_conformal_area_factor_is_weight_squared():
    g = G.make_smooth_weight(17, 17, 1 / 16, seed=3)
    assert np.array_equal(g.area_factor, g.weight ** 2)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        G.make_weighted(-np.ones((2, 2)), 1.0)


def test_grid_arrays_are_read_only():
    g = G.make_euclidean(3, 3, 1.0)
    with pytest.raises(ValueError):
        g.weight[0, 0] = 2.0


def test_linf_factors():
    g = G.make_linf(3, 3, 1.0)
    assert np.allclose(g.area_factor, math.pi / 4, rtol=0, atol=1e-15)
    assert np.all(g.norm_length((1, 1)) == 1.0)
    assert np.all(g.norm_length((1, 0)) == 1.0)


def test_cantor_depth_one_blocks():
    g = G.make_cantor_weight(1, [Fraction(1, 2)])
    n = g.cols - 1
    blocks = G.cantor_squares(1, [Fraction(1, 2)])
    assert sorted((x, y) for x, y, _ in blocks) == [
        (Fraction(1, 8), Fraction(1, 8)), (Fraction(1, 8), Fraction(5, 8)),
        (Fraction(5, 8), Fraction(1, 8)), (Fraction(5, 8), Fraction(5, 8))]
    assert all(s == Fraction(1, 4) for _, _, s in blocks)
    zero = g.weight == 0
    assert zero.sum() == 4 * (n // 4) ** 2
    assert np.all(zero[n // 8: 3 * n // 8, n // 8: 3 * n // 8])


def test_cantor_depth_zero_rejected():
    with pytest.raises(AlignmentError):
        G.make_cantor_weight(0, [0.5])


def test_cantor_misaligned_resolution():
    with pytest.raises(AlignmentError):
        G.make_cantor_weight(1, [0.5], n=60)


def test_cantor_fraction_by_cell_count():
    a = [Fraction(1, 2), Fraction(1, 4)]
    g = G.make_cantor_weight(2, a)
    mask = G.cantor_mask(g, 2, a)
    want = ((1 - a[0]) * (1 - a[1])) ** 2
    assert Fraction(int(mask.sum()), mask.size) == want == Fraction(9, 64)
    assert Fraction(g.meta["cantor_fraction"]) == want


def test_cantor_floor_eps():
    g = G.make_cantor_weight(1, [0.5], floor_eps=0.01)
    assert g.weight.min() == 0.01


def test_quad_sides_partition_boundary():
    q = G.Quad(2, 6, 1, 4)
    ni, nj = q.node_shape
    masks = [q.side_mask(k) for k in (1, 2, 3, 4)]
    boundary = np.zeros((ni, nj), bool)
    boundary[0], boundary[-1], boundary[:, 0], boundary[:, -1] = True, True, True, True
    assert np.array_equal(np.logical_or.reduce(masks), boundary)
    edges = [set(q.side_edges(k)) for k in (1, 2, 3, 4)]
    assert all(edges)
    for a in range(4):
        for b in range(a + 1, 4):
            assert not edges[a] & edges[b]
    assert sum(len(e) for e in edges) == 2 * (ni - 1) + 2 * (nj - 1)


def test_quad_outside_grid():
    g = G.make_euclidean(5, 5, 0.25)
    with pytest.raises(GeometryError):
        G.Quad(0, 4, 0, 1).check_inside(g)


def test_scaled_weight():
    g = G.make_smooth_weight(9, 9, 0.125, seed=1)
    s = g.scaled(3.0)
    assert np.array_equal(s.weight, g.weight * 3.0)
    assert np.array_equal(s.area_factor, (g.weight * 3.0) ** 2)


def test_cell_dual_norm():
    g = G.make_linf(3, 3, 1.0)
    assert np.allclose(g.cell_dual_norm(np.ones((2, 2)), np.ones((2, 2))), 2.0)
    e = G.make_weighted(np.array([[2.0, 0.0]]), 1.0)
    d = e.cell_dual_norm(np.array([[3.0, 0.0]]), np.array([[4.0, 0.0]]))
    assert d[0, 0] == 2.5 and d[0, 1] == 0.0
