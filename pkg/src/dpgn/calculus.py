"""Discrete vector calculus on a :class:`~dpgn.graph.Graph`.

Vertex functions are arrays of shape ``(n_nodes,)`` or ``(n_nodes, k)``; edge
functions are indexed by canonical edge order with ``F_ji = -F_ij``; triangle
functions are indexed by sorted triangle order with orientation
``i -> j -> k -> i``.  Extra trailing axes are treated as channels.
"""

from __future__ import annotations

import numpy as np

from .exceptions import LengthMismatch, ZeroEdgeWeight
from .graph import Graph, laplacian_matrix


def _check(values, expected: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 or arr.shape[0] != expected:
        got = arr.shape[0] if arr.ndim else "scalar"
        raise LengthMismatch(f"{what} has length {got}, graph expects {expected}")
    return arr


def _channel(w: np.ndarray, like: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape + (1,) * (like.ndim - 1))


def gradient(g: Graph, f) -> np.ndarray:
    """``(grad f)_ij = f_j - f_i`` for each canonical edge ``i < j``."""
    f = _check(f, g.n_nodes, "vertex function")
    e = g.edge_array
    return f[e[:, 1]] - f[e[:, 0]]


def divergence(g: Graph, F) -> np.ndarray:
    """Net weighted flow ``(div F)_i = sum_j w_ij F_ij`` out of each vertex."""
    F = _check(F, g.n_edges, "edge function")
    e = g.edge_array
    flow = _channel(g.edge_weights, F) * F
    out = np.zeros((g.n_nodes,) + F.shape[1:])
    np.add.at(out, e[:, 0], flow)
    np.add.at(out, e[:, 1], -flow)
    return out


def laplacian_apply(g: Graph, f) -> np.ndarray:
    """``(L f)_i = sum_j w_ij (f_i - f_j)``."""
    f = _check(f, g.n_nodes, "vertex function")
    return laplacian_matrix(g) @ f


def _triangle_edge_ids(g: Graph) -> np.ndarray:
    """``(n_triangles, 3)`` ids of edges ``(i,j)``, ``(j,k)``, ``(i,k)``."""
    if not g.triangles:
        return np.zeros((0, 3), dtype=np.int64)
    return np.array(
        [[g.edge_id(i, j), g.edge_id(j, k), g.edge_id(i, k)] for i, j, k in g.triangles],
        dtype=np.int64,
    )


# orientation of edges (i,j), (j,k), (i,k) along the cycle i -> j -> k -> i
_TRIANGLE_SIGNS = np.array([1.0, 1.0, -1.0])


def curl(g: Graph, F) -> np.ndarray:
    """``(curl F)(i,j,k) = F(i,j) + F(j,k) + F(k,i)``."""
    F = _check(F, g.n_edges, "edge function")
    ids = _triangle_edge_ids(g)
    if not len(ids):
        return np.zeros((0,) + F.shape[1:])
    signs = _TRIANGLE_SIGNS.reshape((1, 3) + (1,) * (F.ndim - 1))
    return (F[ids] * signs).sum(axis=1)


def curl_adjoint(g: Graph, C) -> np.ndarray:
    """``(curl* C)(i,j) = sum_k (w_ijk / w_ij) C(i,j,k)``.

    Each triangle contributes to its three edges with the sign of the edge in
    the triangle's oriented cycle.  Edges in no triangle get 0.
    """
    C = _check(C, g.n_triangles, "triangle function")
    out = np.zeros((g.n_edges,) + C.shape[1:])
    if g.n_triangles == 0:
        return out
    w = g.edge_weights
    if np.any(w == 0):
        raise ZeroEdgeWeight("curl adjoint divides by an edge weight of zero")
    ids = _triangle_edge_ids(g)
    tw = _channel(g.triangle_weights, C)
    for col in range(3):
        np.add.at(out, ids[:, col], _TRIANGLE_SIGNS[col] * tw * C)
    return out / _channel(w, out)
