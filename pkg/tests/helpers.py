"""Shared builders for model and training tests."""

import numpy as np

from dpgn.graph import grid_graph, path_graph
from dpgn.model import ModelConfig, ModelKind
from dpgn.pde import PDESpec
from dpgn.synthetic import make_synthetic_dataset


def small_dataset(seed=0, n_sequences=4, steps=15, noise_std=0.01, rows=2, cols=5, normalize=True):
    ds = make_synthetic_dataset(
        grid_graph(rows, cols), PDESpec("diffusion", 0.1), n_sequences, steps, seed=seed, noise_std=noise_std
    )
    return ds.normalized() if normalize else ds


def oracle_params(alpha):
    """Width-1 DPGN weights that reproduce ``v' = v - alpha L v`` exactly for v >= 0.

    Each directed edge i -> j carries ``v_i``; a node's outgoing sum is then
    ``deg_i v_i`` and its incoming sum is the neighbour total.
    """
    return {
        "node_encoder.W0": np.array([[1.0]]),
        "node_encoder.b0": np.zeros(1),
        "edge_embed": np.zeros((2, 1)),
        "gn.phi_e.W0": np.array([[0.0], [1.0], [0.0], [0.0]]),
        "gn.phi_e.b0": np.zeros(1),
        "gn.phi_v.W0": np.array([[1.0], [-alpha], [alpha], [0.0]]),
        "gn.phi_v.b0": np.zeros(1),
        "gn.phi_u.W0": np.zeros((3, 1)),
        "gn.phi_u.b0": np.zeros(1),
        "node_decoder.W0": np.array([[1.0]]),
        "node_decoder.b0": np.zeros(1),
    }


ORACLE_CONFIG = ModelConfig(ModelKind.DPGN, d_in=1, d_hidden=1, d_out=1, n_edge_types=2)
