"""Explicit time steppers for diffusion and wave equations on graphs.

The continuum Laplacian is mapped to ``-L`` so that diffusion dissipates:

    diffusion:  v'  = v - alpha * L v
    wave:       v'' = 2 v' - v - c^2 * L v'

The time step is 1; ``alpha`` and ``c`` absorb it.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import BadInitCount, LengthMismatch, NonFiniteState, StabilityWarning
from .graph import Graph, laplacian_matrix


class PDEKind(str, enum.Enum):
    DIFFUSION = "diffusion"
    WAVE = "wave"


@dataclass(frozen=True)
class PDESpec:
    kind: PDEKind = PDEKind.DIFFUSION
    alpha: float = 0.1
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PDEKind(self.kind))
        for name in ("alpha", "c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @property
    def order(self) -> int:
        """Highest time derivative (M)."""
        return 1 if self.kind is PDEKind.DIFFUSION else 2

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha, "c": self.c, "M": self.order}


@dataclass
class Trajectory:
    """States at consecutive unit time steps, shape ``(n_states, n_nodes[, k])``."""

    states: np.ndarray
    spec: PDESpec

    def __len__(self):
        return len(self.states)

    def mass(self) -> np.ndarray:
        return self.states.reshape(len(self.states), -1).sum(axis=1)

    def dirichlet_energy(self, g: Graph) -> np.ndarray:
        return dirichlet_energy(g, self.states)


def dirichlet_energy(g: Graph, states) -> np.ndarray:
    """``v^T L v`` for every state in a ``(time, n[, k])`` stack."""
    states = np.asarray(states, dtype=float)
    L = laplacian_matrix(g)
    Lv = np.einsum("ij,tj...->ti...", L, states)
    return (states * Lv).reshape(len(states), -1).sum(axis=1)


def max_eigenvalue(g: Graph) -> float:
    return float(np.linalg.eigvalsh(laplacian_matrix(g))[-1])


def check_stability(g: Graph, spec: PDESpec, lam_max: float | None = None) -> bool:
    """Warn (and return False) when the explicit scheme is outside its stable range."""
    lam = max_eigenvalue(g) if lam_max is None else lam_max
    if spec.kind is PDEKind.DIFFUSION:
        value, bound, label = spec.alpha * lam, 2.0, "alpha * lambda_max"
    else:
        value, bound, label = spec.c**2 * lam, 4.0, "c^2 * lambda_max"
    if value >= bound:
        warnings.warn(
            f"{label} = {value:.4g} >= {bound:g}; explicit stepping is unstable",
            StabilityWarning,
            stacklevel=3,
        )
        return False
    return True


def _vertex(g, v, what="state"):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[0] != g.n_nodes:
        raise LengthMismatch(f"{what} has length {v.shape[:1]}, graph has {g.n_nodes} nodes")
    return v


def diffusion_step(g: Graph, v, alpha: float, L: np.ndarray | None = None) -> np.ndarray:
    v = _vertex(g, v)
    L = laplacian_matrix(g) if L is None else L
    return v - alpha * (L @ v)


def wave_step(g: Graph, v_prev, v_curr, c: float, L: np.ndarray | None = None) -> np.ndarray:
    v_prev = _vertex(g, v_prev, "v_prev")
    v_curr = _vertex(g, v_curr, "v_curr")
    if v_prev.shape != v_curr.shape:
        raise LengthMismatch(f"v_prev {v_prev.shape} vs v_curr {v_curr.shape}")
    L = laplacian_matrix(g) if L is None else L
    return 2.0 * v_curr - v_prev - c**2 * (L @ v_curr)


def simulate(g: Graph, spec: PDESpec, init, steps: int) -> Trajectory:
    """Run ``steps`` explicit updates from ``init``.

    ``init`` is one vertex function for diffusion and a pair
    ``(v_prev, v_curr)`` for the wave equation; the returned trajectory holds
    ``steps + M`` states with the initial ones first.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if isinstance(init, (list, tuple)) and init and np.ndim(init[0]) >= 1:
        init = list(init)
    else:
        init = [init]
    if len(init) != spec.order:
        raise BadInitCount(f"{spec.kind.value} needs {spec.order} initial state(s), got {len(init)}")
    states = [_vertex(g, s, "initial state").copy() for s in init]
    if len({s.shape for s in states}) != 1:
        raise LengthMismatch("initial states differ in shape")

    L = laplacian_matrix(g)
    check_stability(g, spec, float(np.linalg.eigvalsh(L)[-1]))
    for step in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            if spec.kind is PDEKind.DIFFUSION:
                nxt = states[-1] - spec.alpha * (L @ states[-1])
            else:
                nxt = 2.0 * states[-1] - states[-2] - spec.c**2 * (L @ states[-1])
        if not np.all(np.isfinite(nxt)):
            raise NonFiniteState(step)
        states.append(nxt)
    return Trajectory(np.stack(states), spec)
