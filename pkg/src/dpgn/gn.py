"""Graph-network block: edge, node and global updates on latent graph states.

Several copies of a graph can be processed at once as a disjoint union
(:class:`GraphBatch`); each copy keeps its own global attribute row.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .exceptions import ShapeMismatch
from .graph import Graph, laplacian_matrix
from .nn import apply_mlp, init_mlp


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """``n_graphs`` copies of ``graph`` laid out block by block."""

    graph: Graph
    n_graphs: int = 1

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes * self.n_graphs

    @property
    def n_directed(self) -> int:
        return 2 * self.graph.n_edges * self.n_graphs

    @cached_property
    def _directed(self):
        s, r = self.graph.directed_edges()
        offsets = np.repeat(np.arange(self.n_graphs) * self.graph.n_nodes, len(s))
        return np.tile(s, self.n_graphs) + offsets, np.tile(r, self.n_graphs) + offsets

    @property
    def senders(self) -> np.ndarray:
        return self._directed[0]

    @property
    def receivers(self) -> np.ndarray:
        return self._directed[1]

    @cached_property
    def node_graph(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_graphs), self.graph.n_nodes)

    @cached_property
    def edge_graph(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_graphs), 2 * self.graph.n_edges)

    @cached_property
    def segments(self) -> dict[str, ad.Segments]:
        """Reusable index objects for the GN gathers and aggregations."""
        return {
            "senders": ad.Segments(self.senders, self.n_nodes),
            "receivers": ad.Segments(self.receivers, self.n_nodes),
            "node_graph": ad.Segments(self.node_graph, self.n_graphs),
            "edge_graph": ad.Segments(self.edge_graph, self.n_graphs),
        }

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Block-diagonal Laplacian of the whole batch (sparse)."""
        L = sp.csr_matrix(laplacian_matrix(self.graph))
        return sp.kron(sp.identity(self.n_graphs, format="csr"), L, format="csr")

    def directed_types(self, edge_types) -> np.ndarray:
        """Per-undirected-edge types expanded to every directed copy."""
        edge_types = np.asarray(edge_types, dtype=np.int64)
        if edge_types.shape != (self.graph.n_edges,):
            raise ShapeMismatch(
                f"{edge_types.shape} edge types for {self.graph.n_edges} edges"
            )
        return np.tile(np.concatenate([edge_types, edge_types]), self.n_graphs)


def as_batch(g) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch(g, 1)


@dataclass
class LatentState:
    """Encoded attributes: ``node (N, d)``, ``edge (E_dir, d)``, ``glob (n_graphs, d)``."""

    node: ad.Tensor
    edge: ad.Tensor
    glob: ad.Tensor

    @property
    def d_hidden(self) -> int:
        return self.node.shape[-1]

    def check(self, batch: GraphBatch) -> None:
        d = self.d_hidden
        expected = {
            "node": (batch.n_nodes, d),
            "edge": (batch.n_directed, d),
            "glob": (batch.n_graphs, d),
        }
        for field, shape in expected.items():
            got = getattr(self, field).shape
            if got != shape:
                raise ShapeMismatch(f"latent {field} has shape {got}, expected {shape}")


def init_gn_params(rng: np.random.Generator, d_hidden: int, prefix: str = "gn") -> dict[str, np.ndarray]:
    d = d_hidden
    params = {}
    params.update(init_mlp(rng, f"{prefix}.phi_e", [4 * d, d]))
    params.update(init_mlp(rng, f"{prefix}.phi_v", [4 * d, d]))
    params.update(init_mlp(rng, f"{prefix}.phi_u", [3 * d, d]))
    return params


def gn_step(g, H: LatentState, params: Mapping, prefix: str = "gn") -> LatentState:
    """One edge -> node -> global update.

    1. ``e'_ij = phi_e(e_ij, v_i, v_j, u)`` for every directed edge ``i -> j``
    2. ``v'_i = phi_v(v_i, sum of outgoing e', sum of incoming e', u)``
    3. ``u' = phi_u(u, mean e', mean v')``
    """
    batch = as_batch(g)
    H.check(batch)
    seg = batch.segments
    u_edge = ad.gather(H.glob, seg["edge_graph"])
    e_in = ad.concat(
        [H.edge, ad.gather(H.node, seg["senders"]), ad.gather(H.node, seg["receivers"]), u_edge]
    )
    e_new = apply_mlp(params, f"{prefix}.phi_e", e_in)

    outgoing = ad.segment_sum(e_new, seg["senders"])
    incoming = ad.segment_sum(e_new, seg["receivers"])
    v_in = ad.concat([H.node, outgoing, incoming, ad.gather(H.glob, seg["node_graph"])])
    v_new = apply_mlp(params, f"{prefix}.phi_v", v_in)

    u_in = ad.concat(
        [
            H.glob,
            ad.segment_mean(e_new, seg["edge_graph"]),
            ad.segment_mean(v_new, seg["node_graph"]),
        ]
    )
    u_new = apply_mlp(params, f"{prefix}.phi_u", u_in)
    return LatentState(v_new, e_new, u_new)


def gn_skip_step(g, H: LatentState, params: Mapping, prefix: str = "gn") -> LatentState:
    """Residual variant ``H' = H + GN(H)``."""
    out = gn_step(g, H, params, prefix)
    return LatentState(
        ad.add(H.node, out.node), ad.add(H.edge, out.edge), ad.add(H.glob, out.glob)
    )
