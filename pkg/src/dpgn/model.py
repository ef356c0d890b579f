"""Encoder, recurrent GN core, decoder and the physics-informed objective."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .exceptions import ShapeMismatch, TooFewStates
from .gn import GraphBatch, LatentState, as_batch, gn_skip_step, gn_step, init_gn_params
from .nn import apply_mlp, glorot_uniform, init_mlp
from .pde import PDEKind, PDESpec

UNKNOWN_EDGE_TYPE = 0


class ModelKind(str, enum.Enum):
    DPGN = "dpgn"
    GN_ONLY = "gn-only"
    GN_SKIP = "gn-skip"
    MLP = "mlp"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        return cls(key)

    @property
    def uses_core(self) -> bool:
        return self is not ModelKind.MLP

    @property
    def uses_physics(self) -> bool:
        return self is ModelKind.DPGN


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of a model.  ``n_edge_types`` counts the reserved row 0."""

    kind: ModelKind = ModelKind.DPGN
    d_in: int = 9
    d_hidden: int = 64
    d_out: int = 1
    n_edge_types: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        for name in ("d_in", "d_hidden", "d_out", "n_edge_types"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    d = config.d_hidden
    params = init_mlp(rng, "node_encoder", [config.d_in, d])
    if config.kind.uses_core:
        params["edge_embed"] = glorot_uniform(rng, config.n_edge_types, d)
        params.update(init_gn_params(rng, d))
    params.update(init_mlp(rng, "node_decoder", [d, config.d_out]))
    return params


def _resolve_edge_types(edge_types, n_edge_types: int) -> np.ndarray:
    """Map ids outside the embedding table to the reserved unknown row."""
    t = np.asarray(edge_types, dtype=np.int64)
    return np.where((t >= 0) & (t < n_edge_types), t, UNKNOWN_EDGE_TYPE)


def encode(g, features, edge_types, params: Mapping) -> LatentState:
    """Node MLP on features, table lookup for edges, zeros for the global row."""
    batch = as_batch(g)
    x = ad.tensor(features)
    if x.ndim != 2 or x.shape[0] != batch.n_nodes:
        raise ShapeMismatch(f"features {x.shape} for {batch.n_nodes} nodes")
    node = apply_mlp(params, "node_encoder", x)
    d = node.shape[1]
    table = params["edge_embed"]
    n_types = table.shape[0]
    types = batch.directed_types(_resolve_edge_types(edge_types, n_types))
    edge = ad.gather(table, types)
    glob = ad.Tensor(np.zeros((batch.n_graphs, d)))
    return LatentState(node, edge, glob)


def rollout(g, H0: LatentState, params: Mapping, T: int, skip: bool = False) -> list[LatentState]:
    """``T`` applications of the core; returns ``[H_1, ..., H_T]``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    batch = as_batch(g)
    step = gn_skip_step if skip else gn_step
    states = []
    H = H0
    for _ in range(T):
        H = step(batch, H, params)
        states.append(H)
    return states


def decode(H, params: Mapping) -> ad.Tensor:
    node = H.node if isinstance(H, LatentState) else ad.tensor(H)
    d_in = params["node_decoder.W0"].shape[0]
    if node.ndim != 2 or node.shape[1] != d_in:
        raise ShapeMismatch(f"decoder expects (*, {d_in}), got {node.shape}")
    return apply_mlp(params, "node_decoder", node, relu_last=False)


def _node_states(states: Sequence) -> list[ad.Tensor]:
    return [s.node if isinstance(s, LatentState) else ad.tensor(s) for s in states]


def physics_loss(g, states: Sequence, alpha) -> ad.Tensor:
    """Latent PDE residual summed over consecutive node states.

    ``states`` is the encoder output followed by the rollout states.  With a
    float ``alpha`` (or a diffusion :class:`PDESpec`) the residual is
    ``v_i - v_{i-1} + alpha L v_{i-1}``; a wave spec gives
    ``v_{i+1} - 2 v_i + v_{i-1} + c^2 L v_i``.
    """
    batch = as_batch(g)
    spec = alpha if isinstance(alpha, PDESpec) else PDESpec(PDEKind.DIFFUSION, float(alpha))
    v = _node_states(states)
    M = spec.order
    if len(v) < M + 1:
        raise TooFewStates(f"{len(v)} latent states; the residual needs at least {M + 1}")
    L = batch.laplacian
    for t in v:
        if t.shape[0] != batch.n_nodes:
            raise ShapeMismatch(f"latent node state {t.shape} for {batch.n_nodes} nodes")
    total = None
    for i in range(M, len(v)):
        if spec.kind is PDEKind.DIFFUSION:
            prev = v[i - 1]
            expected = ad.sub(prev, ad.scale(ad.matmul(L, prev), spec.alpha))
        else:
            cur = v[i - 1]
            expected = ad.sub(
                ad.sub(ad.scale(cur, 2.0), v[i - 2]), ad.scale(ad.matmul(L, cur), spec.c**2)
            )
        term = ad.squared_error(v[i], expected)
        total = term if total is None else ad.add(total, term)
    return total


def total_loss(predictions: Sequence, targets: Sequence, physics=None, lam: float = 0.0, weights=None) -> ad.Tensor:
    """``sum_i ||y_hat_i - y_i||^2 + lam * physics``.

    ``weights`` (one broadcastable array per step, or None) masks the
    supervised terms of unlabeled steps; the physics term is never masked.
    """
    if len(predictions) != len(targets):
        raise ShapeMismatch(f"{len(predictions)} predictions for {len(targets)} targets")
    total = ad.Tensor(0.0)
    for i, (p, y) in enumerate(zip(predictions, targets)):
        w = None if weights is None else weights[i]
        if w is not None and not np.any(w):
            continue
        total = ad.add(total, ad.squared_error(p, y, w))
    if physics is not None and lam != 0.0:
        total = ad.add(total, ad.scale(physics, lam))
    return total


def forward(g, features, edge_types, params: Mapping, config: ModelConfig, T: int):
    """Predictions for steps ``1..T`` plus every latent node state.

    Returns ``(predictions, latents)`` where ``latents`` starts with the
    encoder output.  The MLP baseline only supports ``T == 1``.
    """
    batch = as_batch(g)
    if not config.kind.uses_core:
        if T != 1:
            raise ValueError("the MLP baseline only predicts one step ahead")
        node = apply_mlp(params, "node_encoder", ad.tensor(features))
        return [decode(node, params)], [node]
    H0 = encode(batch, features, edge_types, params)
    states = rollout(batch, H0, params, T, skip=config.kind is ModelKind.GN_SKIP)
    return [decode(H, params) for H in states], [H0.node] + [H.node for H in states]
