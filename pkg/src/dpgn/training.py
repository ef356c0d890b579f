"""Training loop, evaluation protocols and checkpoints."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .data import TrajectoryDataset
from .exceptions import DPGNError, FeatureDimMismatch, NonFiniteLoss
from .gn import GraphBatch
from .model import ModelConfig, ModelKind, forward, init_params, physics_loss, total_loss
from .nn import Adam

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "dpgn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.  Defaults follow the published hyper-parameters."""

    lam: float = 1e-5
    alpha: float = 0.001
    T: int = 1
    learning_rate: float = 1e-3
    iterations: int = 30_000
    seed: int = 0
    label_fraction: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    d_hidden: int = 64
    batch_size: int = 8
    eval_every: int = 100
    max_eval_windows: int = 256

    def __post_init__(self):
        checks = {
            "lam": self.lam >= 0,
            "alpha": np.isfinite(self.alpha) and self.alpha >= 0,
            "T": self.T >= 1,
            "learning_rate": self.learning_rate > 0,
            "iterations": self.iterations >= 0,
            "label_fraction": 0.0 <= self.label_fraction <= 1.0,
            "adam_beta1": 0.0 <= self.adam_beta1 < 1.0,
            "adam_beta2": 0.0 <= self.adam_beta2 < 1.0,
            "adam_eps": self.adam_eps > 0,
            "d_hidden": self.d_hidden >= 1,
            "batch_size": self.batch_size >= 1,
            "eval_every": self.eval_every >= 1,
            "max_eval_windows": self.max_eval_windows >= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid TrainConfig field(s): {', '.join(bad)}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig field(s): {', '.join(sorted(unknown))}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    model: ModelConfig
    config: TrainConfig
    log: list[dict] = field(default_factory=list)
    best_iteration: int = 0
    best_val_mse: float = float("nan")
    final_params: dict[str, np.ndarray] | None = None


def _stack(dataset: TrajectoryDataset, arr: np.ndarray, starts: np.ndarray, h: int) -> np.ndarray:
    """Rows ``arr[starts + h]`` flattened to ``(len(starts) * n_nodes, d)``."""
    block = arr[starts + h]
    return block.reshape(-1, block.shape[-1])


def effective_lambda(kind: ModelKind, config: TrainConfig) -> float:
    return config.lam if kind.uses_physics else 0.0


def _label_mask(dataset: TrajectoryDataset, fraction: float, seed: int) -> np.ndarray:
    """Which samples keep their supervised term; fixed once per run."""
    labeled = np.ones(len(dataset), dtype=bool)
    if fraction >= 1.0:
        return labeled
    train = dataset.indices("train")
    rng = np.random.default_rng([seed, 0x1AB])
    n_keep = int(round(fraction * len(train)))
    keep = rng.choice(train, size=n_keep, replace=False) if n_keep else np.array([], dtype=np.int64)
    labeled[train] = False
    labeled[keep] = True
    return labeled


def _batch_loss(model: ModelConfig, cfg: TrainConfig, lam: float, dataset, batch: GraphBatch, starts, params, labeled):
    T = cfg.T
    x = _stack(dataset, dataset.node_features, starts, 0)
    preds, latents = forward(batch, x, dataset.edge_types, params, model, T)
    targets = [_stack(dataset, dataset.targets, starts, h) for h in range(T)]
    n = dataset.graph.n_nodes
    weights = None
    if labeled is not None and not labeled[starts[:, None] + np.arange(T)].all():
        weights = [np.repeat(labeled[starts + h].astype(float), n)[:, None] for h in range(T)]
    phys = None
    if lam != 0.0:
        phys = physics_loss(batch, latents, cfg.alpha)
    return total_loss(preds, targets, phys, lam, weights), phys


def train(
    dataset: TrajectoryDataset,
    config: TrainConfig | None = None,
    model_kind="dpgn",
    callback=None,
) -> TrainResult:
    """Fit a model with Adam and keep the parameters with the best validation MSE.

    ``GN_ONLY`` is DPGN with the physics weight forced to zero, ``GN_SKIP``
    adds the residual connection (also without physics) and ``MLP`` is a
    per-node encoder/decoder restricted to one-step prediction.

    ``result.params`` are the best-validation weights; ``result.final_params``
    the weights after the last iteration.
    """
    cfg = config or TrainConfig()
    kind = ModelKind.parse(model_kind)
    if kind is ModelKind.MLP and cfg.T != 1:
        raise ValueError("the MLP baseline only supports T=1")
    model = ModelConfig(kind, dataset.d_in, cfg.d_hidden, dataset.d_out, dataset.n_edge_types)
    params = init_params(model, cfg.seed)
    lam = effective_lambda(kind, cfg)
    rng = np.random.default_rng(cfg.seed)
    labeled = _label_mask(dataset, cfg.label_fraction, cfg.seed)

    train_starts = dataset.windows("train", cfg.T)
    if not len(train_starts):
        raise DPGNError(f"no training windows of length {cfg.T}")
    val_starts = dataset.windows("val", cfg.T)
    eval_rng = np.random.default_rng([cfg.seed, 0xE7A1])
    train_eval = np.sort(
        eval_rng.choice(train_starts, size=min(cfg.max_eval_windows, len(train_starts)), replace=False)
    )
    val_eval = val_starts[: cfg.max_eval_windows]

    B = min(cfg.batch_size, len(train_starts))
    batch = GraphBatch(dataset.graph, B)
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    names = sorted(params)

    records: list[dict] = []
    best = (np.inf, 0, {k: v.copy() for k, v in params.items()})

    def checkpoint(it, loss=None, phys=None):
        nonlocal best
        tr = _mse(params, model, dataset, train_eval, cfg.T) if len(train_eval) else float("nan")
        rec = {"iteration": it, "split": "train", "mse": tr, "horizon": cfg.T}
        if loss is not None:
            rec["loss"] = loss
        if phys is not None:
            rec["physics"] = phys
        records.append(rec)
        score = tr
        if len(val_eval):
            score = _mse(params, model, dataset, val_eval, cfg.T)
            records.append({"iteration": it, "split": "val", "mse": score, "horizon": cfg.T})
        if callback is not None:
            callback(records[-1])
        if score < best[0]:
            best = (score, it, {k: v.copy() for k, v in params.items()})

    checkpoint(0)
    for it in range(1, cfg.iterations + 1):
        starts = rng.choice(train_starts, size=B, replace=False)
        leaves = {k: ad.Tensor(params[k], requires_grad=True) for k in names}
        loss, phys = _batch_loss(model, cfg, lam, dataset, batch, starts, leaves, labeled)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteLoss(it)
        grads = ad.backward(loss, [leaves[k] for k in names])
        opt.step(params, dict(zip(names, grads)))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            checkpoint(it, value, None if phys is None else phys.item())
            log.debug("iteration %d loss %.6g", it, value)

    best_score, best_it, best_params = best
    if not np.isfinite(best_score):
        best_params = {k: v.copy() for k, v in params.items()}
    return TrainResult(best_params, model, cfg, records, best_it, float(best_score), params)


def predict(params, model: ModelConfig, dataset: TrajectoryDataset, starts, horizon: int, chunk: int = 256) -> np.ndarray:
    """Predictions ``(len(starts), horizon, n_nodes, d_out)`` from inputs at ``starts``."""
    starts = np.asarray(starts, dtype=np.int64)
    n = dataset.graph.n_nodes
    out = np.empty((len(starts), horizon, n, model.d_out))
    for lo in range(0, len(starts), chunk):
        s = starts[lo : lo + chunk]
        batch = GraphBatch(dataset.graph, len(s))
        x = _stack(dataset, dataset.node_features, s, 0)
        preds, _ = forward(batch, x, dataset.edge_types, params, model, horizon)
        for h, p in enumerate(preds):
            out[lo : lo + len(s), h] = p.data.reshape(len(s), n, model.d_out)
    return out


def _per_step_mse(params, model, dataset, starts, horizon) -> np.ndarray:
    preds = predict(params, model, dataset, starts, horizon)
    truth = np.stack([dataset.targets[starts + h] for h in range(horizon)], axis=1)
    return ((preds - truth) ** 2).mean(axis=(0, 2, 3))


def _mse(params, model, dataset, starts, horizon) -> float:
    return float(_per_step_mse(params, model, dataset, starts, horizon).mean())


def evaluate(params, model: ModelConfig, dataset: TrajectoryDataset, horizon: int, split: str = "test") -> np.ndarray:
    """MSE at each lead time ``1..horizon`` over every ``split`` window."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    starts = dataset.windows(split, horizon)
    if not len(starts):
        raise DPGNError(f"no {split} windows of length {horizon}")
    return _per_step_mse(params, model, dataset, starts, horizon)


def evaluate_inductive(params, model: ModelConfig, dataset: TrajectoryDataset, horizon: int, split: str = "test") -> np.ndarray:
    """Apply parameters fitted on one graph to another graph's dataset.

    Edge types the embedding table has never seen fall back to the reserved
    unknown row.
    """
    if dataset.d_in != model.d_in or dataset.d_out != model.d_out:
        raise FeatureDimMismatch(
            f"model expects d_in={model.d_in}, d_out={model.d_out}; "
            f"dataset has d_in={dataset.d_in}, d_out={dataset.d_out}"
        )
    return evaluate(params, model, dataset, horizon, split)


def horizon_sweep(
    dataset: TrajectoryDataset,
    config: TrainConfig,
    model_kind,
    horizons: int,
    seeds: Iterable[int],
) -> list[dict]:
    """Train once per seed, evaluate lead times ``1..horizons``; mean and std per lead time."""
    per_seed = []
    for seed in seeds:
        res = train(dataset, replace(config, seed=int(seed)), model_kind)
        per_seed.append(evaluate(res.params, res.model, dataset, horizons))
    mse = np.stack(per_seed)
    return [
        {"horizon": h + 1, "mse": float(mse[:, h].mean()), "std": float(mse[:, h].std()), "runs": len(per_seed)}
        for h in range(horizons)
    ]


# -- persistence ---------------------------------------------------------------


def save_checkpoint(path, result: TrainResult, extra: Mapping | None = None) -> None:
    obj = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": result.model.to_dict(),
        "train_config": result.config.to_dict(),
        "best_iteration": result.best_iteration,
        "best_val_mse": result.best_val_mse,
        "params": {
            k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in sorted(result.params.items())
        },
    }
    if extra:
        obj["extra"] = dict(extra)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj) + "\n")
    os.replace(tmp, path)


def load_checkpoint(path) -> TrainResult:
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != CHECKPOINT_FORMAT or obj.get("version") != CHECKPOINT_VERSION:
        raise DPGNError(f"{path} is not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT}")
    params = {
        k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in obj["params"].items()
    }
    return TrainResult(
        params=params,
        model=ModelConfig(**obj["model"]),
        config=TrainConfig.from_dict(obj["train_config"]),
        best_iteration=obj.get("best_iteration", 0),
        best_val_mse=obj.get("best_val_mse", float("nan")),
    )


def write_metric_log(path, records: Sequence[Mapping]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
