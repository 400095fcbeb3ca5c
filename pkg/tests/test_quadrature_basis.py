from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoibc.basis import MINUS, PLUS, BasisSet, lagrange_eval, rwg_eval
from hoibc.mesh import gen_icosphere
from hoibc.quadrature import SUPPORTED_ORDERS, barycentric, gauss_rule, graded_rule, green

TRI = np.array([[0.2, -0.1, 0.3], [1.1, 0.2, 0.1], [0.4, 0.9, -0.2]])


def _area(p):
    return 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))


def _monomial_exact(p, q, r):
    # int over the reference triangle of w1^p w2^q w3^r, divided by its area
    return 2.0 * factorial(p) * factorial(q) * factorial(r) / factorial(p + q + r + 2)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_gauss_rules_exact_to_degree(order):
    rule = gauss_rule(order)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(rule.points >= 0)
    worst = 0.0
    for deg in range(rule.degree + 1):
        for p in range(deg + 1):
            for q in range(deg + 1 - p):
                r = deg - p - q
                w = rule.points
                val = np.sum(rule.weights * w[:, 0] ** p * w[:, 1] ** q * w[:, 2] ** r)
                ex = _monomial_exact(p, q, r)
                worst = max(worst, abs(val - ex) / ex)
    assert worst <= 1e-13


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_gauss_rules_not_exact_beyond_degree(order):
    rule = gauss_rule(order)
    deg = rule.degree + 1
    errs = []
    for p in range(deg + 1):
        for q in range(deg + 1 - p):
            w = rule.points
            val = np.sum(rule.weights * w[:, 0] ** p * w[:, 1] ** q * w[:, 2] ** (deg - p - q))
            errs.append(abs(val - _monomial_exact(p, q, deg - p - q)))
    assert max(errs) > 1e-12


def test_one_point_area_and_three_point_product():
    A = _area(TRI)
    r1 = gauss_rule(1)
    assert A * r1.weights.sum() == pytest.approx(A)
    r3 = gauss_rule(3)
    assert A * np.sum(r3.weights * r3.points[:, 0] * r3.points[:, 1]) == pytest.approx(A / 12, rel=1e-14)


def test_seven_point_degree_five():
    r = gauss_rule(7)
    val = np.sum(r.weights * r.points[:, 0] ** 2 * r.points[:, 1] ** 2 * r.points[:, 2])
    assert val == pytest.approx(_monomial_exact(2, 2, 1), rel=1e-13)


def test_unsupported_order():
    with pytest.raises(ValueError):
        gauss_rule(5)


def test_graded_rule_integrates_smooth_and_singular():
    r = graded_rule(10, 3)
    assert r.weights.sum() == pytest.approx(1.0, rel=1e-13)
    w = r.points
    # no polynomial degree is advertised; smooth integrands are still accurate
    assert r.degree == -1
    assert np.sum(r.weights * w[:, 0] ** 3 * w[:, 1]) == pytest.approx(_monomial_exact(3, 1, 0), rel=1e-5)
    # distance to a corner to the power -1 (integrable corner singularity)
    # unit right triangle with vertex 0 at the origin: int dA / |x| = sqrt(2) ln(1 + sqrt(2))
    exact = np.sqrt(2) * np.log(1 + np.sqrt(2))
    errs = []
    for n in (6, 10, 16, 24):
        g = graded_rule(n, 3)
        errs.append(abs(0.5 * np.sum(g.weights / np.linalg.norm(g.points[:, 1:], axis=1)) - exact) / exact)
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] < 1e-6


def test_barycentric_examples():
    np.testing.assert_allclose(barycentric(TRI, TRI.mean(axis=0)), [1 / 3] * 3, atol=1e-14)
    np.testing.assert_allclose(barycentric(TRI, TRI[0]), [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(barycentric(TRI, 0.5 * (TRI[0] + TRI[1])), [0.5, 0.5, 0], atol=1e-14)
    with pytest.raises(ValueError):
        barycentric(TRI, TRI[0] + np.cross(TRI[1] - TRI[0], TRI[2] - TRI[0]))
    with pytest.raises(ValueError):
        barycentric(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), [0.5, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3))
def test_barycentric_roundtrip(v):
    w = np.array(v) / sum(v)
    np.testing.assert_allclose(barycentric(TRI, w @ TRI), w, atol=1e-12)


def test_green_examples(rng):
    assert green(0.0, [0, 0, 0], [1, 0, 0]) == pytest.approx(1 / (4 * np.pi))
    assert green(2 * np.pi, [0, 0, 0], [0.5, 0, 0]) == pytest.approx(-1 / (2 * np.pi), abs=1e-15)
    x, y = rng.standard_normal((2, 20, 3))
    np.testing.assert_array_equal(green(3.0, x, y), green(3.0, y, x))
    with pytest.raises(ValueError):
        green(1.0, x[0], x[0])


@pytest.fixture(scope="module")
def basis():
    return BasisSet(gen_icosphere(1.0, 1))


def test_rwg_examples(basis):
    mesh = basis.mesh
    for n in (0, 7, 50):
        f = basis.rwg(n)
        assert np.linalg.norm(rwg_eval(f, f.v_plus, PLUS)) == 0.0
        a, b = mesh.vertices[mesh.topology.edges[n]]
        mid = 0.5 * (a + b)
        # normal component across the edge, measured in each triangle's plane
        nu = (b - a) / np.linalg.norm(b - a)
        m_plus = np.cross(nu, mesh.normals[f.tri_plus])
        m_minus = np.cross(nu, mesh.normals[f.tri_minus])
        fp, fm = rwg_eval(f, mid, PLUS), rwg_eval(f, mid, MINUS)
        assert fp @ m_plus == pytest.approx(fm @ m_minus, rel=1e-12)
        assert f.divergence(PLUS) == pytest.approx(f.length / f.area_plus)
        assert f.divergence(MINUS) == pytest.approx(-f.length / f.area_minus)


def test_rwg_outside_support_is_zero(basis):
    f = basis.rwg(0)
    c = basis.mesh.corners[f.tri_plus]
    outside = c[0] + 1.5 * (c[1] - c[0])
    assert np.all(rwg_eval(f, outside, PLUS, basis.mesh) == 0)


def test_lagrange_examples(basis):
    mesh = basis.mesh
    topo = mesh.topology
    for n in (0, 33):
        g = basis.lagrange(n)
        base = np.cross(g.direction, mesh.normals[g.tri_plus])
        opp = mesh.vertices[topo.opp_plus[n]]
        np.testing.assert_allclose(lagrange_eval(g, opp, mesh, PLUS), -base, atol=1e-14)
        mid = topo.midpoint[n]
        np.testing.assert_allclose(lagrange_eval(g, mid, mesh, PLUS), base, atol=1e-14)
        # (1 - 2 w_opp) averages to 1 - 2/3 = 1/3 over the triangle
        r = gauss_rule(3)
        pts = r.map(mesh.corners[g.tri_plus])
        vals = np.array([lagrange_eval(g, x, mesh, PLUS) for x in pts])
        np.testing.assert_allclose((r.weights[:, None] * vals).sum(axis=0), base / 3, atol=1e-14)


def test_basis_is_tangent(basis):
    mesh = basis.mesh
    r = gauss_rule(7)
    for n in range(0, basis.n, 11):
        f, g = basis.rwg(n), basis.lagrange(n)
        for side, t in ((PLUS, f.tri_plus), (MINUS, f.tri_minus)):
            nrm = mesh.normals[t]
            for x in r.map(mesh.corners[t]):
                fv = rwg_eval(f, x, side)
                gv = lagrange_eval(g, x, mesh, side)
                assert abs(fv @ nrm) <= 1e-12 * max(np.linalg.norm(fv), 1e-300)
                assert abs(gv @ nrm) <= 1e-12 * max(np.linalg.norm(gv), 1e-300)


def test_per_triangle_tables_match_functions(basis):
    mesh = basis.mesh
    topo = mesh.topology
    for t in (0, 17, 40):
        x = mesh.corners[t].mean(axis=0)
        for a in range(3):
            n = basis.tri_edges[t, a]
            side = PLUS if topo.tri_plus[n] == t else MINUS
            ref = rwg_eval(basis.rwg(n), x, side)
            np.testing.assert_allclose(basis.coef[t, a] * (x - basis.corners[t, a]), ref, atol=1e-14)
