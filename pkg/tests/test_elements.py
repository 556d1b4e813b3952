from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elastamr.elements import (
    LOCAL_EDGES,
    Compliance,
    apply_A,
    apply_C,
    eval_stress_basis,
    generating_layout,
    hz_layout,
    lagrange,
)
from elastamr.mesh import Mesh
from elastamr.quadrature import edge_rule, triangle_rule


def ref_moment(a, b, c):
    """int over the reference triangle of l1^a l2^b l3^c."""
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


# -- quadrature ---------------------------------------------------------------


def test_triangle_moment_l1l2():
    q = triangle_rule(4)
    val = q.weights @ (q.points[:, 0] * q.points[:, 1])
    assert np.isclose(val, 1 / 24, rtol=1e-15)


def test_edge_rule_x7():
    q = edge_rule(7)
    assert np.isclose(q.weights @ q.points**7, 1 / 8, rtol=1e-14)


@pytest.mark.parametrize("d", range(0, 21))
def test_triangle_weights_sum(d):
    assert np.isclose(triangle_rule(d).weights.sum(), 0.5, rtol=1e-14)


@pytest.mark.parametrize("d", [1, 5, 8, 13, 20])
def test_triangle_exactness(d):
    q = triangle_rule(d)
    for a in range(d + 1):
        for b in range(d + 1 - a):
            c = d - a - b
            val = q.weights @ (q.points[:, 0] ** a * q.points[:, 1] ** b * q.points[:, 2] ** c)
            assert np.isclose(val, ref_moment(a, b, c), rtol=1e-12, atol=0)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        triangle_rule(-1)
    with pytest.raises(ValueError):
        edge_rule(1000)


# -- compliance ---------------------------------------------------------------


def test_A_identity_case():
    A = Compliance(0.0, 0.5)
    tau = np.array([[1.3, -0.2], [-0.2, 4.0]])
    np.testing.assert_allclose(apply_A(A, tau), tau)


def test_A_of_identity():
    A = Compliance(7.0, 2.5)
    np.testing.assert_allclose(A.apply(np.eye(2)), np.eye(2) / (2 * (2.5 + 7.0)))


def test_roundtrip_random():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((100, 2, 2))
    S = S + np.swapaxes(S, 1, 2)
    for A in (Compliance(10.0, 1.0), Compliance(1e4, 1.0), Compliance.from_young_poisson(1e5, 0.4999)):
        np.testing.assert_allclose(apply_C(A, apply_A(A, S)), S, atol=1e-13 * np.abs(S).max())


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 1e6),
    st.floats(1e-3, 1e3),
    arrays(np.float64, 3, elements=st.floats(-10, 10)),
)
def test_A_is_spd(lam, mu, c):
    A = Compliance(lam, mu)
    tau = np.array([[c[0], c[1]], [c[1], c[2]]])
    val = np.sum(A.apply(tau) * tau)
    assert val >= -1e-15
    if np.abs(c).max() > 1e-6:
        assert val > 0


def test_invalid_lame():
    with pytest.raises(ValueError):
        Compliance(-1.0, 1.0)
    with pytest.raises(ValueError):
        Compliance(1.0, 0.0)


# -- bases -------------------------------------------------------------------


def one_triangle(P=((0.1, 0.0), (1.2, 0.3), (0.4, 0.9))):
    return Mesh(P, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ["dirichlet"] * 3, assign_refinement_edges=False)


def test_lagrange_nodal():
    for k in (2, 3, 4):
        L = lagrange(k)
        np.testing.assert_allclose(L(L.nodes), np.eye(len(L.nodes)), atol=1e-13)


def test_generating_vertex_values_and_bubbles():
    m = one_triangle()
    lay = generating_layout(m.vertices_of)
    V = eval_stress_basis(lay, m.grad_lambda, np.eye(3))[0]  # (3 vertices, 36, 2, 2)
    E11 = np.array([[1.0, 0], [0, 0]])
    np.testing.assert_allclose(V[0, 0], E11)
    for v in range(3):
        others = [a for a in range(27) if a // 3 != v]
        assert np.abs(V[v, others]).max() < 1e-14
        assert np.abs(V[v, 30:]).max() < 1e-14


def test_generating_bubbles_zero_normal_trace():
    m = one_triangle()
    lay = generating_layout(m.vertices_of)
    s = np.linspace(0, 1, 10)
    ed = m.edges
    for j in range(3):
        bary = np.zeros((10, 3))
        bary[:, LOCAL_EDGES[j, 0]] = 1 - s
        bary[:, LOCAL_EDGES[j, 1]] = s
        B = eval_stress_basis(lay, m.grad_lambda, bary)[0, :, 30:]
        e = ed.elem2edge[0, j]
        assert np.abs(B @ ed.normals[e]).max() < 1e-14


def test_generating_rank_30():
    m = one_triangle()
    lay = generating_layout(m.vertices_of)
    q = triangle_rule(8)
    Phi = eval_stress_basis(lay, m.grad_lambda, q.points)[0]  # (Q, 36, 2, 2)
    G = np.einsum("q,qaij,qbij->ab", q.weights, Phi, Phi)
    ev = np.linalg.eigvalsh(G)
    assert np.sum(ev > 1e-12 * ev[-1]) == 30


def test_hz_local_basis_spans_p3():
    m = one_triangle()
    lay = hz_layout(m.edges.normals[m.edges.elem2edge])
    assert lay.n_local == 30
    q = triangle_rule(8)
    Phi = eval_stress_basis(lay, m.grad_lambda, q.points)[0]
    G = np.einsum("q,qaij,qbij->ab", q.weights, Phi, Phi)
    assert np.linalg.eigvalsh(G)[0] > 1e-10


def test_divergence_is_p2():
    """div of every shape function is reproduced by its P2 interpolant."""
    m = one_triangle()
    lay = hz_layout(m.edges.normals[m.edges.elem2edge])
    nodes = lagrange(2).nodes
    D = eval_stress_basis(lay, m.grad_lambda, nodes, order=1)[0]
    div_nodes = np.einsum("pajkk->paj", D)
    q = triangle_rule(6)
    Dq = np.einsum("pajkk->paj", eval_stress_basis(lay, m.grad_lambda, q.points, order=1)[0])
    interp = np.einsum("qn,naj->qaj", lagrange(2)(q.points), div_nodes)
    np.testing.assert_allclose(Dq, interp, atol=1e-11)


def test_point_outside():
    m = one_triangle()
    lay = hz_layout(m.edges.normals[m.edges.elem2edge])
    with pytest.raises(ValueError):
        eval_stress_basis(lay, m.grad_lambda, [[1.2, -0.1, -0.1]])


def test_second_derivatives_against_fd():
    m = one_triangle()
    lay = hz_layout(m.edges.normals[m.edges.elem2edge])
    p = np.array([[0.3, 0.3, 0.4]])
    H = eval_stress_basis(lay, m.grad_lambda, p, order=2)[0, 0]
    G = m.grad_lambda[0]  # d lambda / dx
    h = 1e-5

    def grad_at(dx):
        return eval_stress_basis(lay, m.grad_lambda, p + G @ dx, order=1)[0, 0]

    for x in range(2):
        e = np.eye(2)[x] * h
        fd = (grad_at(e) - grad_at(-e)) / (2 * h)
        np.testing.assert_allclose(H[..., x], fd, atol=1e-6)
