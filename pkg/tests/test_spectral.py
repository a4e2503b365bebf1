import numpy as np
import pytest

from flowroute.errors import DimensionError, DomainError
from flowroute.graph import build_edge_list
from flowroute.spectral import build_laplacian, dense_laplacian, laplacian_matrix, pseudoinverse, solve

from conftest import random_connected_sc, triangle


def test_single_edge_laplacian():
    el = build_edge_list(np.array([[0.0, 1.0], [1.0, 0.0]]))
    lap = build_laplacian(el, np.array([2.0]), delta=0.5)
    np.testing.assert_array_equal(lap.L, [[2.5, -2.0], [-2.0, 2.5]])


def test_triangle_unregularized_row_sums():
    L = laplacian_matrix(build_edge_list(triangle()))
    assert np.all(L.sum(axis=1) == 0.0)
    assert np.all(np.diag(L) == 2.0)


def test_laplacian_matches_outer_products(rng):
    el = build_edge_list(random_connected_sc(rng, 15))
    c = rng.uniform(0.1, 5.0, len(el))
    delta = 1e-3
    ref = delta * np.eye(15)
    for (i, j), cm in zip(el.edges, c):
        b = np.zeros(15)
        b[i], b[j] = 1.0, -1.0
        ref += cm * np.outer(b, b)
    lap = build_laplacian(el, c, delta)
    np.testing.assert_allclose(lap.L, ref, rtol=0, atol=1e-12)
    assert np.max(np.abs(lap.L - lap.L.T)) <= 1e-10
    assert np.all(np.diag(lap.factor) > 0)
    rec = lap.factor @ lap.factor.T
    assert np.linalg.norm(rec - lap.L) / np.linalg.norm(lap.L) < 1e-8


def test_solve_round_trip_and_regularizer_identity(rng):
    el = build_edge_list(random_connected_sc(rng, 20))
    lap = build_laplacian(el, el.weights, 1e-6)
    v = rng.standard_normal(20)
    np.testing.assert_allclose(solve(lap, lap.L @ v), v, atol=1e-8 * np.abs(v).max() * 1e3)
    x = solve(lap, np.full(20, lap.delta))
    np.testing.assert_allclose(x, np.ones(20), rtol=1e-6)


def test_solve_matches_dense_inverse(rng):
    el = build_edge_list(random_connected_sc(rng, 20))
    lap = build_laplacian(el, el.weights, 1e-2)
    rhs = rng.standard_normal((20, 3))
    ref = np.linalg.inv(lap.L) @ rhs
    np.testing.assert_allclose(solve(lap, rhs), ref, rtol=1e-8, atol=1e-10)


def test_nonpositive_capacity_is_domain_error():
    el = build_edge_list(triangle())
    with pytest.raises(DomainError):
        build_laplacian(el, np.array([1.0, 0.0, 1.0]))
    with pytest.raises(DomainError):
        build_laplacian(el, np.ones(3), delta=0.0)
    with pytest.raises(DimensionError):
        build_laplacian(el, np.ones(2))


def test_solve_shape_mismatch():
    lap = build_laplacian(build_edge_list(triangle()), np.ones(3))
    with pytest.raises(DimensionError):
        solve(lap, np.ones(4))


def test_pseudoinverse_single_edge():
    Ld = pseudoinverse(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    np.testing.assert_allclose(Ld, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)


def test_pseudoinverse_zero_matrix():
    assert np.all(pseudoinverse(np.zeros((3, 3))) == 0.0)


def test_penrose_conditions(rng):
    L = dense_laplacian(random_connected_sc(rng, 10))
    P = pseudoinverse(L)
    tol = 1e-6
    assert np.max(np.abs(L @ P @ L - L)) <= tol * np.abs(L).max()
    assert np.max(np.abs(P @ L @ P - P)) <= tol * np.abs(P).max()
    assert np.max(np.abs((L @ P).T - L @ P)) <= tol
    assert np.max(np.abs((P @ L).T - P @ L)) <= tol
    assert np.max(np.abs(P @ np.ones(10))) <= 1e-8
