"""Undirected weighted graphs with enumerated 3-cliques.

Edges are stored once, in canonical ``(i, j)`` form with ``i < j``, sorted
lexicographically.  Every array indexed by edges (weights, edge functions,
edge types) follows that order; triangles are sorted triples ``(i, j, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DuplicateEdge, NonPositiveWeight, OutOfRangeIndex, SelfLoop


@dataclass(frozen=True, eq=False)
class Graph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    edge_weights: np.ndarray
    triangles: tuple[tuple[int, int, int], ...]
    triangle_weights: np.ndarray
    _edge_index: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edge_id(self, i: int, j: int) -> int:
        """Position of the undirected edge ``{i, j}`` in canonical order."""
        return self._edge_index[(min(i, j), max(i, j))]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edge_index

    @property
    def edge_array(self) -> np.ndarray:
        """``(n_edges, 2)`` int array of canonical endpoints."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    @property
    def triangle_array(self) -> np.ndarray:
        if not self.triangles:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(self.triangles, dtype=np.int64)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Senders and receivers with each undirected edge expanded twice.

        The first ``n_edges`` entries are the canonical directions ``i -> j``,
        the next ``n_edges`` the reversed ones, in the same edge order.
        """
        e = self.edge_array
        senders = np.concatenate([e[:, 0], e[:, 1]])
        receivers = np.concatenate([e[:, 1], e[:, 0]])
        return senders, receivers

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n_nodes, self.n_nodes))
        if self.edges:
            e = self.edge_array
            W[e[:, 0], e[:, 1]] = self.edge_weights
            W[e[:, 1], e[:, 0]] = self.edge_weights
        return W

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        adj = [[] for _ in range(self.n_nodes)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n_nodes

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph with node ``i`` renamed to ``perm[i]``; weights travel along."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n_nodes)):
            raise ValueError("perm must be a permutation of range(n_nodes)")
        edges = [(perm[a], perm[b]) for a, b in self.edges]
        tri_w = {
            tuple(sorted(perm[x] for x in t)): w
            for t, w in zip(self.triangles, self.triangle_weights)
        }
        return build_graph(self.n_nodes, edges, list(self.edge_weights), tri_w)


def _canonical(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def build_graph(
    n_nodes: int,
    edges: Iterable[Sequence[int]],
    edge_weights: Sequence[float] | None = None,
    triangle_weights: Mapping[tuple[int, int, int], float] | None = None,
) -> Graph:
    """Validate an edge list and return an immutable :class:`Graph`.

    ``edge_weights`` is aligned with ``edges`` as given (default 1.0).
    ``triangle_weights`` maps node triples, in any order, to ``w_ijk >= 0``;
    triangles not mentioned get 1.0.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 1:
        raise OutOfRangeIndex(f"n_nodes must be positive, got {n_nodes}")
    edges = [tuple(int(x) for x in e) for e in edges]
    if edge_weights is None:
        edge_weights = [1.0] * len(edges)
    if len(edge_weights) != len(edges):
        raise ValueError(
            f"{len(edge_weights)} edge weights given for {len(edges)} edges"
        )

    weight_of: dict[tuple[int, int], float] = {}
    for (i, j), w in zip(edges, edge_weights):
        for x in (i, j):
            if not 0 <= x < n_nodes:
                raise OutOfRangeIndex(f"node {x} outside 0..{n_nodes - 1}")
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        key = _canonical(i, j)
        if key in weight_of:
            raise DuplicateEdge(f"duplicate edge {key}")
        w = float(w)
        if not np.isfinite(w) or w <= 0:
            raise NonPositiveWeight(f"edge {key} has weight {w}")
        weight_of[key] = w

    canon = tuple(sorted(weight_of))
    index = {e: k for k, e in enumerate(canon)}
    weights = np.array([weight_of[e] for e in canon], dtype=float)
    triangles = _triangles_from(n_nodes, canon)

    tri_w = np.ones(len(triangles))
    if triangle_weights:
        tri_index = {t: k for k, t in enumerate(triangles)}
        for t, w in triangle_weights.items():
            key = tuple(sorted(int(x) for x in t))
            if key not in tri_index:
                raise ValueError(f"{key} is not a triangle of this graph")
            w = float(w)
            if not np.isfinite(w) or w < 0:
                raise NonPositiveWeight(f"triangle {key} has weight {w}")
            tri_w[tri_index[key]] = w

    weights.setflags(write=False)
    tri_w.setflags(write=False)
    return Graph(n_nodes, canon, weights, triangles, tri_w, index)


def _triangles_from(n_nodes, canon_edges):
    higher = [set() for _ in range(n_nodes)]
    for i, j in canon_edges:
        higher[i].add(j)
    tris = []
    for i in range(n_nodes):
        for j in sorted(higher[i]):
            for k in sorted(higher[i] & higher[j]):
                tris.append((i, j, k))
    return tuple(sorted(tris))


def enumerate_triangles(g: Graph) -> list[tuple[int, int, int]]:
    """All 3-cliques of ``g`` as sorted triples, each listed once."""
    return list(_triangles_from(g.n_nodes, g.edges))


def brute_force_triangles(g: Graph) -> list[tuple[int, int, int]]:
    """O(n^3) scan over every node triple; kept as a reference oracle."""
    return [
        t
        for t in combinations(range(g.n_nodes), 3)
        if g.has_edge(t[0], t[1]) and g.has_edge(t[0], t[2]) and g.has_edge(t[1], t[2])
    ]


def laplacian_matrix(g: Graph) -> np.ndarray:
    """Dense ``L = D - W``."""
    W = g.weight_matrix()
    return np.diag(W.sum(axis=1)) - W


# -- constructors ------------------------------------------------------------


def path_graph(n: int, weights: Sequence[float] | None = None) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)], weights)


def cycle_graph(n: int) -> Graph:
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return build_graph(n, list(combinations(range(n), 2)))


def grid_graph(rows: int, cols: int) -> Graph:
    """4-neighbour lattice; node ``r * cols + c`` sits at row r, column c."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return build_graph(rows * cols, edges)


def grid_coordinates(rows: int, cols: int) -> np.ndarray:
    r, c = np.divmod(np.arange(rows * cols), cols)
    return np.stack([r / max(rows - 1, 1), c / max(cols - 1, 1)], axis=1)


def random_graph(
    n: int,
    p: float,
    rng: np.random.Generator,
    weight_range: tuple[float, float] | None = None,
    connected: bool = False,
) -> Graph:
    """Erdos-Renyi graph; optionally threaded with a random spanning path.

    With ``weight_range=(lo, hi)`` edge weights are drawn from ``(lo, hi]``.
    """
    pairs = [pq for pq in combinations(range(n), 2) if rng.random() < p]
    if connected and n > 1:
        order = rng.permutation(n)
        have = set(pairs)
        for a, b in zip(order[:-1], order[1:]):
            key = _canonical(int(a), int(b))
            if key not in have:
                have.add(key)
                pairs.append(key)
    weights = None
    if weight_range is not None:
        lo, hi = weight_range
        # (lo, hi]: reflect the half-open [lo, hi) draw
        weights = list(hi - (hi - lo) * rng.random(len(pairs)))
    return build_graph(n, pairs, weights)
