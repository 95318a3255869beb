import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from conftest import HEXAGON, NONCONVEX, ORACLES, PENTAGON, SQUARE

from vemflow.polybasis import (
    CellGeometry,
    curl_isomorphism_solve,
    curl_xperp_matrix,
    deriv_matrix,
    dim_poly,
    edge_rule_and_dof_points,
    exponents,
    gauss_lobatto_interior,
    polygon_quadrature,
    vector_decomposition_matrix,
)

CELLS = [SQUARE, PENTAGON, HEXAGON, NONCONVEX]
coef = st.floats(-3, 3, allow_nan=False)


def test_dim_poly_standard_value():
    assert [dim_poly(n) for n in range(-1, 5)] == [0, 1, 3, 6, 10, 15]
    for n in range(6):
        assert len(exponents(n)) == dim_poly(n)


def test_unit_square_x2y2():
    q = polygon_quadrature(SQUARE, 4)
    val = q.integrate(q.points[:, 0] ** 2 * q.points[:, 1] ** 2)
    assert abs(val - ORACLES["square_x2y2"]) < 1e-13


def test_pentagon_monomials_against_exact_oracle():
    q = polygon_quadrature(PENTAGON, 4)
    for key, exact in ORACLES["pentagon_monomials"].items():
        a, b = map(int, key.split(","))
        val = q.integrate(q.points[:, 0] ** a * q.points[:, 1] ** b)
        assert abs(val - exact) <= 1e-12 * max(1.0, abs(exact)), key


@pytest.mark.parametrize("cell", CELLS, ids=["square", "pentagon", "hexagon", "nonconvex"])
def test_area_and_weights(cell):
    q = polygon_quadrature(cell, 7)
    g = CellGeometry(cell)
    assert np.all(q.weights > 0)
    assert abs(q.weights.sum() - g.area) < 1e-13 * max(1, g.area)


def test_hexagon_symmetry():
    q = polygon_quadrature(HEXAGON, 3)
    assert abs(q.integrate(q.points[:, 0])) < 1e-15
    assert abs(CellGeometry(HEXAGON).diameter - 1.0) < 1e-15


@pytest.mark.parametrize("cell", CELLS, ids=["square", "pentagon", "hexagon", "nonconvex"])
def test_green_moments_match_quadrature(cell):
    g = CellGeometry(cell)
    q = polygon_quadrature(cell, 8)
    m = g.basis.eval(q.points, 8)
    ref = q.integrate(m)
    assert np.allclose(g.monomial_integrals(8), ref, rtol=1e-12, atol=1e-14 * g.area)


@pytest.mark.parametrize("cell", CELLS, ids=["square", "pentagon", "hexagon", "nonconvex"])
def test_gram_spd(cell):
    G = CellGeometry(cell).gram(4)
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0


def test_gauss_lobatto_nodes():
    _, pts = edge_rule_and_dof_points(np.zeros(2), np.array([2.0, 0.0]), 2)
    assert np.allclose(pts, [[1.0, 0.0]])
    assert np.allclose(gauss_lobatto_interior(4), ORACLES["gauss_lobatto_k3"], atol=1e-15)


def test_edge_rule_linear_exact():
    rule, _ = edge_rule_and_dof_points(np.array([0.0, 1.0]), np.array([3.0, 5.0]), 2)
    f = 2 * rule.points[:, 0] - rule.points[:, 1] + 1
    # trapezoid: length 5, endpoint values 0 and 2
    assert abs(rule.integrate(f) - 5.0) < 1e-13


def test_curl_isomorphism_constant():
    assert np.allclose(curl_isomorphism_solve(np.array([1.0])), [ORACLES["curl_iso_const"]])
    assert np.allclose(curl_isomorphism_solve(np.zeros(3)), 0.0)


@given(st.lists(coef, min_size=6, max_size=6), st.floats(0.1, 3.0))
def test_curl_isomorphism_roundtrip(q, h):
    q = np.array(q)
    p = curl_isomorphism_solve(q, h)
    assert np.allclose(curl_xperp_matrix(2, h) @ p, q, atol=1e-12 * max(1, np.abs(q).max()))


def test_curl_isomorphism_symbolic():
    import sympy as sp

    x, y = sp.symbols("x y")
    rng = np.random.default_rng(3)
    q = rng.normal(size=6)
    p = curl_isomorphism_solve(q, 1.0)
    P = sum(c * x**a * y**b for c, (a, b) in zip(p, exponents(2)))
    Q = sum(c * x**a * y**b for c, (a, b) in zip(q, exponents(2)))
    curl = sp.diff(-x * P, x) - sp.diff(y * P, y)
    assert float(sp.Poly(sp.expand(curl - Q), x, y).max_norm()) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_vector_decomposition_complete(n, seed):
    M = vector_decomposition_matrix(n, 0.7)
    assert M.shape == (2 * dim_poly(n), 2 * dim_poly(n))
    v = np.random.default_rng(seed).normal(size=2 * dim_poly(n))
    c = np.linalg.solve(M, v)
    assert np.allclose(M @ c, v, atol=1e-11 * max(1, np.abs(v).max()))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_derivative_matrix_matches_basis_gradient(n, seed):
    g = CellGeometry(PENTAGON)
    pts = np.random.default_rng(seed).uniform(0, 1.5, size=(5, 2))
    c = np.random.default_rng(seed + 1).normal(size=dim_poly(n))
    gr = np.einsum("pmd,m->pd", g.basis.grad(pts, n), c)
    dx = g.basis.eval(pts, n - 1) @ (deriv_matrix(n, 0) @ c) / g.h
    dy = g.basis.eval(pts, n - 1) @ (deriv_matrix(n, 1) @ c) / g.h
    assert np.allclose(gr, np.column_stack([dx, dy]), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 6))
def test_quadrature_exactness_property(scale, tx, ty, deg):
    cell = PENTAGON * scale + np.array([tx, ty])
    g = CellGeometry(cell)
    q = polygon_quadrature(cell, deg)
    ref = g.monomial_integrals(deg)
    got = q.integrate(g.basis.eval(q.points, deg))
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-12 * g.area)
