"""Synthetic diffusion / wave datasets generated with :mod:`dpgn.pde`."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .data import DEFAULT_SPLIT, UNKNOWN, TrajectoryDataset, assign_splits
from .graph import Graph
from .pde import PDEKind, PDESpec, simulate


def initial_condition(g: Graph, spec: PDESpec, rng: np.random.Generator, amplitude: float = 1.0):
    """Random localised start: a heat source or a pulse at rest at an end node."""
    if spec.kind is PDEKind.DIFFUSION:
        v = np.zeros(g.n_nodes)
        v[rng.integers(g.n_nodes)] = amplitude
        return v
    degree = np.zeros(g.n_nodes, dtype=int)
    for i, j in g.edges:
        degree[i] += 1
        degree[j] += 1
    ends = np.flatnonzero(degree == degree.min())
    v = np.zeros(g.n_nodes)
    v[ends[rng.integers(len(ends))]] = amplitude
    return (v, v.copy())


def make_synthetic_dataset(
    g: Graph,
    spec: PDESpec,
    n_sequences: int,
    steps: int,
    seed: int = 0,
    noise_std: float = 0.0,
    coords: np.ndarray | None = None,
    edge_types: Sequence[int] | None = None,
    edge_type_map: Mapping[str, int] | None = None,
    split_fractions=DEFAULT_SPLIT,
    amplitude: float = 1.0,
) -> TrajectoryDataset:
    """Simulate ``n_sequences`` runs of ``steps`` updates each.

    Each sequence contributes ``steps`` supervised pairs (state at t ->
    state at t+1).  Observation noise is drawn once per state, so the target
    of step t is the same noisy snapshot as the input of step t+1.  Static
    ``coords`` (n_nodes, c) are appended to the node features.

    Sequences are laid end to end on one time axis (sequence ``s`` covers
    ``t = s*steps .. (s+1)*steps - 1``), so the chronological split puts
    whole early episodes in train and the latest ones in test.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if n_sequences < 1 or steps < 1:
        raise ValueError("n_sequences and steps must be >= 1")
    rng = np.random.default_rng(seed)
    M = spec.order
    feats, targets, seq_ids, times = [], [], [], []
    for sid in range(n_sequences):
        traj = simulate(g, spec, initial_condition(g, spec, rng, amplitude), steps).states
        obs = traj[M - 1 :]
        if noise_std > 0:
            obs = obs + rng.normal(0.0, noise_std, size=obs.shape)
        x = obs[:-1, :, None]
        if coords is not None:
            static = np.broadcast_to(np.asarray(coords, dtype=float), (steps,) + np.shape(coords))
            x = np.concatenate([x, static], axis=2)
        feats.append(x)
        targets.append(obs[1:, :, None])
        seq_ids.append(np.full(steps, sid))
        times.append(sid * steps + np.arange(steps))

    if edge_types is None:
        edge_types = np.ones(g.n_edges, dtype=np.int64)
        edge_type_map = {UNKNOWN: 0, "default": 1}
    if edge_type_map is None:
        edge_type_map = {UNKNOWN: 0, **{f"type{t}": int(t) for t in sorted(set(int(t) for t in edge_types)) if t != 0}}

    seq_ids = np.concatenate(seq_ids)
    n_coord = 0 if coords is None else np.shape(coords)[1]
    return TrajectoryDataset(
        graph=g,
        node_features=np.concatenate(feats),
        targets=np.concatenate(targets),
        edge_types=np.asarray(edge_types, dtype=np.int64),
        sequence_ids=seq_ids,
        times=np.concatenate(times),
        split=assign_splits(seq_ids, split_fractions),
        feature_names=["value"] + [f"coord{c + 1}" for c in range(n_coord)],
        target_names=["value_next"],
        edge_type_map=dict(edge_type_map),
        meta={
            "pde": spec.to_dict(),
            "seed": seed,
            "noise_std": noise_std,
            "amplitude": amplitude,
            "n_sequences": n_sequences,
            "steps": steps,
            "split_fractions": list(split_fractions),
        },
    )
