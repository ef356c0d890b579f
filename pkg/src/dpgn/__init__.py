"""Graph calculus, graph PDE simulators and physics-informed graph networks."""

from .calculus import curl, curl_adjoint, divergence, gradient, laplacian_apply
from .data import DatasetManifest, NodeStandardizer, TrajectoryDataset, load_dataset, save_dataset
from .estimator import DPGNForecaster
from .exceptions import *  # noqa: F401,F403
from .graph import Graph, build_graph, grid_graph, laplacian_matrix, path_graph, random_graph
from .model import ModelConfig, ModelKind
from .pde import PDEKind, PDESpec, Trajectory, simulate
from .synthetic import make_synthetic_dataset
from .training import TrainConfig, TrainResult, evaluate, evaluate_inductive, train

__version__ = "0.1.0"

__all__ = [
    "DPGNForecaster",
    "DatasetManifest",
    "Graph",
    "ModelConfig",
    "ModelKind",
    "NodeStandardizer",
    "PDEKind",
    "PDESpec",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "TrajectoryDataset",
    "build_graph",
    "curl",
    "curl_adjoint",
    "divergence",
    "evaluate",
    "evaluate_inductive",
    "gradient",
    "grid_graph",
    "laplacian_apply",
    "laplacian_matrix",
    "load_dataset",
    "make_synthetic_dataset",
    "path_graph",
    "random_graph",
    "save_dataset",
    "simulate",
    "train",
]
