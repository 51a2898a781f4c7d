import dataclasses
import math

import numpy as np
import pytest

from modsurf import grid as G
from modsurf.errors import (DegenerateBandError, HarmonicityError, OrientationError,
                            ResolutionError)
from modsurf.modulus import modulus, solve_dirichlet
from modsurf.reciprocal import audit_squares
from modsurf.uniformize import (band_fraction, change_of_variables_check, conjugate, degree_check,
                                dividing_modulus_check, dyadic_mass_check, dyadic_masses,
                                dyadic_scale, flux_across_level, level_curve_monotone,
                                winding_number)

LEFT_HALF = lambda y1, y2: (y1 < 0.5).astype(float)


def fmap_of(g, q=None):
    q = q or G.Quad.full(g)
    return conjugate(g, q, solve_dirichlet(g, q))


@pytest.fixture(scope="module")
def euclid_map(euclid65):
    return fmap_of(euclid65)


@pytest.fixture(scope="module")
def linf_map(linf129):
    return fmap_of(linf129)


@pytest.fixture(scope="module")
def cantor_map(cantor2):
    return fmap_of(cantor2)


def test_unit_square_conjugate_is_y(euclid_map):
    y = np.broadcast_to((np.arange(65) / 64)[:, None], euclid_map.v.shape)
    assert euclid_map.m1 == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(euclid_map.v - y)) < 1e-9


def test_rectangle_height():
    g = G.make_euclidean(33, 65, 1 / 32)
    assert fmap_of(g).m1 == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("name", ["euclid_map", "linf_map", "cantor_map"])
def test_map_invariants(name, request):
    f = request.getfixturevalue(name)
    tol = 1e-8 * max(1.0, f.m1)
    assert np.all(np.abs(f.v[0]) <= tol)
    assert np.all(np.abs(f.v[-1] - f.m1) <= tol)
    assert f.v.min() >= -tol and f.v.max() <= f.m1 + tol
    assert f.u.u.min() >= 0 and f.u.u.max() <= 1


def test_v_constant_on_clusters(cantor_map):
    cl = cantor_map.u.cluster
    for rep in np.unique(cl):
        assert np.ptp(cantor_map.v[cl == rep]) == 0


@pytest.mark.parametrize("s", np.round(np.arange(0.1, 1.0, 0.1), 10))
def test_flux_across_levels(linf129, linf_map, s):
    q = G.Quad.full(linf129)
    assert abs(flux_across_level(linf129, q, linf_map.u, s) - linf_map.m1) <= 1e-8


@pytest.mark.parametrize("t", [0.15, 0.5, 0.85])
def test_level_curves_monotone(linf_map, cantor_map, t):
    assert level_curve_monotone(linf_map, t)
    assert level_curve_monotone(cantor_map, t)


def test_unconverged_potential_rejected(euclid65):
    q = G.Quad.full(euclid65)
    p = solve_dirichlet(euclid65, q)
    noisy = p.u.copy()
    noisy[1:-1, 1:-1] += 1e-3 * np.random.default_rng(0).random(noisy[1:-1, 1:-1].shape)
    with pytest.raises(HarmonicityError):
        conjugate(euclid65, q, dataclasses.replace(p, u=noisy))


def test_dividing_full_band(euclid65):
    q = G.Quad.full(euclid65)
    c = dividing_modulus_check(euclid65, q, solve_dirichlet(euclid65, q), 0.0, 1.0)
    assert c.lhs == pytest.approx(1.0, abs=1e-9) and c.rhs == pytest.approx(1.0, abs=1e-9)


def test_dividing_half_band(euclid65):
    q = G.Quad.full(euclid65)
    c = dividing_modulus_check(euclid65, q, solve_dirichlet(euclid65, q), 0.25, 0.75)
    assert c.rhs == pytest.approx(2.0, abs=1e-9)
    assert c.relative_error <= 0.02


def test_dividing_radial_weight():
    g = G.make_radial_weight(129, 129, 1 / 128)
    q = G.Quad.full(g)
    c = dividing_modulus_check(g, q, solve_dirichlet(g, q), 0.4, 0.6)
    assert c.relative_error <= 0.02


def test_center_membership_is_coarser():
    g = G.make_random_norm_field(33, 33, 1 / 32, seed=4)
    q = G.Quad.full(g)
    u = solve_dirichlet(g, q)
    frac = dividing_modulus_check(g, q, u, 0.3, 0.7).relative_error
    cen = dividing_modulus_check(g, q, u, 0.3, 0.7, membership="center").relative_error
    assert frac <= 0.02 and cen <= 0.2


def test_empty_band_raises():
    g = G.make_euclidean(3, 3, 1.0)
    q = G.Quad.full(g)
    with pytest.raises(DegenerateBandError):
        dividing_modulus_check(g, q, solve_dirichlet(g, q), 0.3, 0.7, membership="center")


def test_band_fraction_exact_for_linear():
    x = np.broadcast_to(np.arange(5) / 4, (5, 5))
    frac = band_fraction(x, 0.1, 0.6)
    assert frac.sum() / frac.size == pytest.approx(0.5)


def test_dyadic_scale():
    assert dyadic_scale(1.0) == (0, 1.0)
    assert dyadic_scale(0.5) == (-1, 1.0)
    assert dyadic_scale(math.pi / 2) == (1, pytest.approx(math.pi / 4))


def test_dyadic_masses_unit_square(euclid65, euclid_map):
    masses, expected = dyadic_masses(euclid_map, 2)
    assert masses.shape == (4, 4) and expected == 1 / 16
    assert np.max(np.abs(masses - 1 / 16)) * 16 <= 0.02


def test_dyadic_whole_rectangle(euclid_map, linf_map):
    for f in (euclid_map, linf_map):
        k0, _ = dyadic_scale(f.m1)
        masses, _ = dyadic_masses(f, max(0, -k0), min_cells=1)
        assert masses.sum() == pytest.approx(f.m1, rel=1e-12)


def test_dyadic_linf(linf129, linf_map):
    assert dyadic_mass_check(linf129, G.Quad.full(linf129), linf_map, 2) <= 0.05


def test_dyadic_under_resolved():
    g = G.make_euclidean(9, 9, 0.125)
    f = fmap_of(g)
    with pytest.raises(ResolutionError):
        dyadic_mass_check(g, G.Quad.full(g), f, 3)


def test_change_of_variables(euclid65, euclid_map, cantor2, cantor_map):
    q = G.Quad.full(euclid65)
    one = change_of_variables_check(euclid65, q, euclid_map, lambda a, b: np.ones_like(a))
    assert abs(one.lhs - euclid_map.m1) <= 1e-8 and abs(one.rhs - euclid_map.m1) <= 1e-8
    y1 = change_of_variables_check(euclid65, q, euclid_map, lambda a, b: a)
    assert y1.lhs == pytest.approx(0.5, rel=0.01) and y1.rhs == pytest.approx(0.5, rel=0.01)
    half = change_of_variables_check(cantor2, G.Quad.full(cantor2), cantor_map, LEFT_HALF)
    assert half.relative_error <= 0.03


def test_degree(euclid_map, linf_map, cantor_map):
    assert degree_check(euclid_map)
    assert degree_check(linf_map)
    assert degree_check(cantor_map)
    neg = euclid_map.negated()
    assert not degree_check(neg)
    # negating both coordinates is a rotation by pi about the origin, so the
    # image loop no longer encloses the target center
    assert winding_number(neg) == 0
    with pytest.raises(OrientationError):
        degree_check(neg, strict=True)


def test_transverse_product_within_kappa(linf129, linf_map):
    sub = [G.Quad(0, 63, 0, 63), G.Quad(64, 127, 64, 127), G.Quad.full(linf129)]
    _, kappa = audit_squares(linf129, sub)
    prod = linf_map.m1 * modulus(linf129, G.Quad.full(linf129), "24").value
    assert 1 / kappa.lower <= prod <= kappa.upper
