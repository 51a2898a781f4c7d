import numpy as np
import pytest
from scipy.sparse import csr_matrix

from modsurf.errors import DegenerateGeometryError, SolverError
from modsurf.network import merge_clusters, pcg, solve_network


def test_series_resistors():
    # 0 -- 1 -- 2 with unit conductances, 0 fixed at 0 and 2 at 1
    sol = solve_network(3, [0, 1], [1, 2], [1.0, 1.0], np.array([0.0, np.nan, 1.0]))
    assert sol.potential[1] == pytest.approx(0.5)
    assert sol.energy == pytest.approx(0.5)


def test_clusters_use_minimum_index():
    rep = merge_clusters(5, np.array([4, 1, 0]), np.array([2, 3, 1]), np.array([np.inf, np.inf, 1.0]))
    assert rep.tolist() == [0, 1, 2, 1, 2]


def test_superconducting_short_circuit():
    with pytest.raises(DegenerateGeometryError):
        solve_network(2, [0], [1], [np.inf], np.array([0.0, 1.0]))


def test_floating_component():
    fixed = np.array([0.0, np.nan, 1.0, np.nan])
    with pytest.raises(DegenerateGeometryError):
        solve_network(4, [0, 1], [1, 2], [1.0, 1.0], fixed)
    sol = solve_network(4, [0, 1], [1, 2], [1.0, 1.0], fixed, floating="zero")
    assert sol.potential[3] == 0.0


def test_pcg_reports_failure_with_residual():
    A = csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]]))
    with pytest.raises(SolverError) as info:
        pcg(A, np.array([1.0, 2.0, 3.0]), tol=1e-14, max_iter=1)
    assert info.value.residual > 0 and info.value.iterations == 1


def test_pcg_solves():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(20, 20))
    A = csr_matrix(M @ M.T + 20 * np.eye(20))
    b = rng.normal(size=20)
    x, it, res = pcg(A, b, tol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-9)
    assert res <= 1e-12


def test_negative_conductance_rejected():
    with pytest.raises(ValueError):
        solve_network(2, [0], [1], [-1.0], np.array([0.0, 1.0]))
