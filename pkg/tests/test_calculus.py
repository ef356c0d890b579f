import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpgn.calculus import curl, curl_adjoint, divergence, gradient, laplacian_apply
from dpgn.exceptions import LengthMismatch
from dpgn.graph import build_graph, complete_graph, laplacian_matrix, path_graph, random_graph

from conftest import random_graphs

TRIANGLE = [(0, 1), (1, 2), (0, 2)]


def test_gradient_path():
    np.testing.assert_array_equal(gradient(path_graph(3), [1.0, 3.0, 0.0]), [2.0, -3.0])


def test_gradient_constant_is_zero():
    g = complete_graph(5)
    np.testing.assert_array_equal(gradient(g, np.full(5, 7.0)), 0.0)


def test_gradient_triangle():
    g = build_graph(3, TRIANGLE)
    F = gradient(g, [0.0, 1.0, 4.0])
    # canonical edge order (0,1), (0,2), (1,2)
    assert dict(zip(g.edges, F)) == {(0, 1): 1.0, (0, 2): 4.0, (1, 2): 3.0}


def test_divergence_path():
    g = path_graph(3)
    np.testing.assert_array_equal(divergence(g, [1.0, 0.0]), [1.0, -1.0, 0.0])
    np.testing.assert_array_equal(divergence(g, [0.0, 0.0]), 0.0)


def test_laplacian_apply_examples():
    g = path_graph(3)
    np.testing.assert_array_equal(laplacian_apply(g, [1.0, 0.0, 0.0]), [1.0, -1.0, 0.0])
    np.testing.assert_array_equal(laplacian_apply(g, [2.0, 2.0, 2.0]), 0.0)
    k4 = complete_graph(4)
    f = np.random.default_rng(0).normal(size=4)
    np.testing.assert_allclose(laplacian_apply(k4, f), laplacian_matrix(k4) @ f, atol=1e-14)


def test_curl_of_gradient_on_triangle():
    g = build_graph(3, TRIANGLE)
    assert abs(curl(g, gradient(g, [0.3, -1.2, 5.0]))[0]) < 1e-15


def test_curl_example():
    g = build_graph(3, TRIANGLE)
    F = np.zeros(3)
    F[g.edge_id(0, 1)] = 1.0
    F[g.edge_id(1, 2)] = 1.0
    np.testing.assert_array_equal(curl(g, F), [2.0])


def test_no_triangles():
    g = path_graph(4)
    assert curl(g, np.ones(3)).shape == (0,)
    np.testing.assert_array_equal(curl_adjoint(g, np.zeros(0)), np.zeros(3))


def test_curl_adjoint_single_triangle():
    g = build_graph(3, TRIANGLE)
    F = curl_adjoint(g, [1.0])
    np.testing.assert_array_equal(np.abs(F), 1.0)
    np.testing.assert_allclose(divergence(g, F), 0.0, atol=1e-15)


def test_curl_adjoint_shared_edge_cancels():
    # triangles (0,1,2) and (1,2,3) orient the shared edge (1,2) the same way
    g = build_graph(4, [(0, 1), (1, 2), (0, 2), (1, 3), (2, 3)])
    assert g.triangles == ((0, 1, 2), (1, 2, 3))
    F = curl_adjoint(g, [1.0, -1.0])
    assert F[g.edge_id(1, 2)] == 0.0


def test_curl_adjoint_is_weighted_adjoint():
    # <curl F, C>_T = <F, curl* C>_E with edge and triangle weights
    gen = np.random.default_rng(5)
    for g in random_graphs(10, seed=4, p=0.6):
        F = gen.normal(size=g.n_edges)
        C = gen.normal(size=g.n_triangles)
        lhs = np.sum(g.triangle_weights * curl(g, F) * C)
        rhs = np.sum(g.edge_weights * F * curl_adjoint(g, C))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_operator_identities_random():
    gen = np.random.default_rng(7)
    for g in random_graphs(30, seed=3, p=0.5):
        f = gen.normal(size=g.n_nodes)
        np.testing.assert_allclose(divergence(g, gradient(g, f)), -laplacian_apply(g, f), atol=1e-10)
        assert np.abs(curl(g, gradient(g, f))).max(initial=0.0) < 1e-12
        C = gen.normal(size=g.n_triangles)
        assert np.abs(divergence(g, curl_adjoint(g, C))).max() < 1e-10


def test_channelwise():
    g = complete_graph(4)
    f = np.random.default_rng(1).normal(size=(4, 3))
    F = gradient(g, f)
    assert F.shape == (6, 3)
    for c in range(3):
        np.testing.assert_array_equal(F[:, c], gradient(g, f[:, c]))
        np.testing.assert_allclose(divergence(g, F)[:, c], divergence(g, F[:, c]))


def test_length_mismatch():
    g = path_graph(3)
    with pytest.raises(LengthMismatch):
        gradient(g, [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        divergence(g, [1.0, 2.0, 3.0])
    with pytest.raises(LengthMismatch):
        curl(g, [1.0])


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
)
def test_gradient_linear(seed, a, b):
    gen = np.random.default_rng(seed)
    g = random_graph(8, 0.5, gen, weight_range=(0.0, 2.0))
    f, h = gen.normal(size=(2, 8))
    np.testing.assert_allclose(
        gradient(g, a * f + b * h), a * gradient(g, f) + b * gradient(g, h), atol=1e-12
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 15))
def test_div_grad_property(seed, n):
    gen = np.random.default_rng(seed)
    g = random_graph(n, 0.4, gen, weight_range=(0.0, 2.0))
    f = gen.normal(size=n)
    np.testing.assert_allclose(divergence(g, gradient(g, f)), -(laplacian_matrix(g) @ f), atol=1e-10)
