"""Dense layers, parameter initialisation and the Adam optimiser.

Parameters live in a flat ``dict[str, np.ndarray]``; an MLP called ``name``
owns the keys ``name.W0, name.b0, name.W1, ...``.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(rng: np.random.Generator, name: str, sizes: Sequence[int]) -> dict[str, np.ndarray]:
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{name}.W{k}"] = glorot_uniform(rng, fan_in, fan_out)
        params[f"{name}.b{k}"] = np.zeros(fan_out)
    return params


def mlp_depth(params: Mapping, name: str) -> int:
    k = 0
    while f"{name}.W{k}" in params:
        k += 1
    return k


def apply_mlp(params: Mapping, name: str, x, relu_last: bool = True) -> ad.Tensor:
    """Affine layers with ReLU between them (and after the last if ``relu_last``)."""
    depth = mlp_depth(params, name)
    if depth == 0:
        raise KeyError(f"no MLP named {name!r} in params")
    h = x
    for k in range(depth):
        activate = k < depth - 1 or relu_last
        h = ad.dense(h, params[f"{name}.W{k}"], params[f"{name}.b{k}"], activate)
    return h


class Adam:
    """Adam with bias correction, updating a parameter dict in place."""

    def __init__(self, params: Mapping[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
