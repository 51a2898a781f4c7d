import json
import math
from fractions import Fraction

import numpy as np
import pytest

from modsurf import grid as G
from modsurf.metric import distance_field, node_index
from modsurf.reciprocal import (CSV_HEADER, MaximalOperator, audit, audit_point_condition,
                                audit_square, audit_squares, cantor_block_squares, coarea_check,
                                default_squares, kappa_estimates, level_set_integral,
                                lipschitz_constant, mass_bound_pipeline)


def test_euclidean_products_are_one(euclid65):
    squares, kappa = audit_squares(euclid65, check_duality=True)
    assert len(squares) == 85
    for s in squares:
        assert abs(s.product - 1) <= 1e-6
        assert s.duality_error <= 1e-8
    assert abs(kappa.upper - 1) <= 1e-6 and abs(kappa.lower - 1) <= 1e-6


def test_linf_product(linf129):
    s = audit_square(linf129, G.Quad.full(linf129))
    assert abs(s.product - math.pi ** 2 / 4) / (math.pi ** 2 / 4) <= 0.05


@pytest.mark.parametrize("k", [1, 2])
def test_cantor_product_lower_bound(k):
    g = G.make_cantor_weight(k, [Fraction(1, 2)] * k)
    mk = float(1 / (1 - Fraction(g.meta["cantor_fraction"])))
    s = audit_square(g, G.Quad.full(g))
    assert s.product >= (0.9 * mk) ** 2


def test_cantor_kappa_grows_with_depth():
    kappas = [audit_squares(G.make_cantor_weight(k, [0.5] * k))[1].upper for k in (1, 2, 3)]
    assert all(b >= a for a, b in zip(kappas, kappas[1:]))


def test_cantor_block_squares():
    g = G.make_cantor_weight(2, [0.5, 0.5])
    blocks = cantor_block_squares(g)
    assert len(blocks) == 4 + 16
    assert G.Quad(0, 31, 0, 31) in blocks  # level-one block [1/8, 3/8] padded by 1/8
    assert cantor_block_squares(G.make_euclidean(65, 65, 1 / 64)) == []
    assert len(default_squares(g)) == len(set(default_squares(g)))


def test_kappa_is_function_of_products(cantor2):
    squares, kappa = audit_squares(cantor2, default_squares(cantor2)[:12])
    prods = [s.product for s in squares if s.product is not None]
    assert kappa.upper == max(prods)
    assert kappa.lower == max(1 / p for p in prods)
    assert kappa_estimates(squares) == kappa
    assert all(1 / kappa.lower <= p <= kappa.upper for p in prods)


def test_products_invariant_under_scaling():
    g = G.make_smooth_weight(33, 33, 1 / 32, seed=2)
    a, _ = audit_squares(g)
    b, _ = audit_squares(g.scaled(5.0))
    assert [s.product for s in a] == [s.product for s in b]


def test_failed_square_is_annotated():
    w = np.ones((8, 8))
    w[4, :] = 0.0
    g = G.make_weighted(w, 1 / 8)
    squares, _ = audit_squares(g, [G.Quad.full(g)])
    assert squares[0].product is None and "DegenerateGeometryError" in squares[0].error


def test_annulus_curves_monotone():
    g = G.make_euclidean(65, 65, 1 / 64)
    R = 0.4
    pa = audit_point_condition(g, [(32, 32), (30, 34)], R, [R / 2.5, R / 4, R / 8])
    assert not pa.violations
    for c in [(32, 32), (30, 34)]:
        vals = [p.modulus for p in pa.curves if p.center == c]
        assert len(vals) == 3 and all(b <= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        audit_point_condition(g, [(32, 32)], R, [R / 8, R / 4])


def test_maximal_constant_function():
    g = G.make_euclidean(33, 33, 1 / 32)
    dom = np.zeros(g.cell_shape, bool)
    dom[12:20, 12:20] = True
    op = MaximalOperator(g, radii=[2 * g.h, 3 * g.h], domain=dom)
    assert op(np.ones(g.cell_shape)).max() <= 1 / 25 + 1e-12


def test_maximal_delta_decay():
    g = G.make_euclidean(49, 49, 1 / 48)
    op = MaximalOperator(g, radii=list(np.geomspace(1.01 * g.h, 8 * g.h, 30)))
    delta = np.zeros(g.cell_shape)
    delta[24, 24] = 1 / g.cell_measure[24, 24]
    M = op(delta)
    scaled = [M[24, 24 + k] * (k * g.h) ** 2 for k in (2, 3, 4)]
    for v in scaled:
        assert v == pytest.approx(1 / (25 * math.pi), rel=0.2)


def test_maximal_batch_matches_single():
    g = G.make_random_norm_field(9, 9, 0.125, seed=1)
    op = MaximalOperator(g)
    rng = np.random.default_rng(0)
    fields = rng.random((3, 8, 8))
    batch = op(fields)
    for f, m in zip(fields, batch):
        assert np.allclose(op(f), m, rtol=0, atol=1e-15)


def test_maximal_l2_inequality():
    g = G.make_smooth_weight(17, 17, 1 / 16, seed=3)
    op = MaximalOperator(g)
    rng = np.random.default_rng(1)
    for _ in range(20):
        lhs, rhs = op.l2_check(rng.exponential(size=g.cell_shape))
        assert lhs <= rhs


def test_coarea_left_edge_distance():
    g = G.make_euclidean(33, 33, 1 / 32)
    m = np.broadcast_to(np.arange(33) / 32, (33, 33))
    c = coarea_check(g, m, np.ones(g.cell_shape))
    assert c.lhs == pytest.approx(1.0, rel=1e-12)
    assert c.rhs == pytest.approx(4 / math.pi, rel=1e-12)
    assert c.ok


def test_coarea_zero_function():
    g = G.make_euclidean(9, 9, 0.125)
    m = distance_field(g, [0])
    c = coarea_check(g, m, np.zeros(g.cell_shape))
    assert c.lhs == 0 and c.rhs == 0 and c.ok


@pytest.mark.parametrize("make", [
    lambda: G.make_euclidean(33, 33, 1 / 32),
    lambda: G.make_linf(33, 33, 1 / 32, 0.3),
    lambda: G.make_smooth_weight(33, 33, 1 / 32, seed=5),
])
def test_coarea_center_distance(make):
    g = make()
    m = distance_field(g, [node_index(g, (16, 16))])
    assert coarea_check(g, m, np.ones(g.cell_shape)).ok


def test_coarea_sampled_matches_exact():
    g = G.make_random_norm_field(17, 17, 1 / 16, seed=6)
    m = distance_field(g, [node_index(g, (3, 11))])
    f = np.random.default_rng(2).random(g.cell_shape)
    exact = level_set_integral(g, m, f)
    sampled = level_set_integral(g, m, f, mode="sampled", samples=4000)
    assert sampled == pytest.approx(exact, rel=1e-3)


def test_lipschitz_sees_off_axis_gradients():
    # gradient along (1, 1) has max-norm dual length 2 but only 1 along either axis
    g = G.make_linf(5, 5, 0.25)
    I, J = np.mgrid[0:5, 0:5]
    m = 0.25 * (I + J)
    assert lipschitz_constant(g, m) == pytest.approx(2.0)


def test_pipeline_euclidean():
    g = G.make_euclidean(65, 65, 1 / 64)
    rep = mass_bound_pipeline(g)
    assert abs(rep.c_u - math.pi) / math.pi < 0.10
    assert all(rep.all_ok().values())
    assert all(c.margin > 1.5 for _, c in rep.annulus)
    assert not rep.mass_bound_suspect


def test_pipeline_linf():
    rep = mass_bound_pipeline(G.make_linf(65, 65, 1 / 64, math.pi / 4))
    assert all(rep.all_ok().values())


def test_pipeline_cantor_flags_mass_bound(cantor2):
    rep = mass_bound_pipeline(cantor2)
    assert all(rep.all_ok().values())
    assert rep.mass_bound_suspect


def test_report_schema_and_determinism(cantor2):
    a = audit(cantor2, threads=1)
    b = audit(cantor2, threads=3)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert set(d) == {"squares", "kappa_upper", "kappa_lower", "annuli", "c_u", "checks"}
    assert d["annuli"]
    assert d["checks"]["cantor_profile"] == cantor2.meta["profile"]
    assert a.annulus_csv().splitlines()[0] == CSV_HEADER
    assert a.kappa_upper >= max(s.product for s in a.squares if s.product is not None)
