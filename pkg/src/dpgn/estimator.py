"""Scikit-learn style front end for the training and evaluation routines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import TrajectoryDataset
from .model import ModelKind
from .training import TrainConfig, evaluate, evaluate_inductive, predict, train


def check_dataset(dataset) -> TrajectoryDataset:
    if not isinstance(dataset, TrajectoryDataset):
        raise TypeError(f"expected a TrajectoryDataset, got {type(dataset).__name__}")
    return dataset


class DPGNForecaster(RegressorMixin, BaseEstimator):
    """Recurrent graph-network forecaster with an optional latent physics penalty.

    ``fit`` takes a :class:`~dpgn.data.TrajectoryDataset` and trains on its
    ``train`` split (validation split used for model selection).  ``predict``
    rolls the model ``horizon`` steps from every window start of a split.

    >>> est = DPGNForecaster(model="gn-only", iterations=10, hidden_dim=8)  # doctest: +SKIP
    >>> est.fit(dataset).score(dataset)                                     # doctest: +SKIP
    """

    def __init__(
        self,
        model="dpgn",
        hidden_dim=64,
        horizon=1,
        lam=1e-5,
        alpha=0.001,
        learning_rate=1e-3,
        iterations=30_000,
        batch_size=8,
        label_fraction=1.0,
        eval_every=100,
        seed=0,
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_eps=1e-8,
    ):
        self.model = model
        self.hidden_dim = hidden_dim
        self.horizon = horizon
        self.lam = lam
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.batch_size = batch_size
        self.label_fraction = label_fraction
        self.eval_every = eval_every
        self.seed = seed
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            lam=float(self.lam),
            alpha=float(self.alpha),
            T=int(self.horizon),
            learning_rate=float(self.learning_rate),
            iterations=int(self.iterations),
            seed=int(self.seed),
            label_fraction=float(self.label_fraction),
            adam_beta1=float(self.adam_beta1),
            adam_beta2=float(self.adam_beta2),
            adam_eps=float(self.adam_eps),
            d_hidden=int(self.hidden_dim),
            batch_size=int(self.batch_size),
            eval_every=int(self.eval_every),
        )

    def fit(self, dataset, y=None, callback=None):
        dataset = check_dataset(dataset)
        kind = ModelKind.parse(self.model)
        result = train(dataset, self._train_config(), kind, callback=callback)
        self.result_ = result
        self.params_ = result.params
        self.model_config_ = result.model
        self.log_ = result.log
        self.best_iteration_ = result.best_iteration
        self.n_features_in_ = dataset.d_in
        return self

    def predict(self, dataset, horizon=None, split="test"):
        """Array ``(n_windows, horizon, n_nodes, d_out)`` in the dataset's units."""
        check_is_fitted(self, "params_")
        dataset = check_dataset(dataset)
        h = int(self.horizon if horizon is None else horizon)
        starts = dataset.windows(split, h)
        return predict(self.params_, self.model_config_, dataset, starts, h)

    def evaluate(self, dataset, horizon=None, split="test", inductive=False) -> np.ndarray:
        """Per-lead-time MSE over the ``split`` windows."""
        check_is_fitted(self, "params_")
        dataset = check_dataset(dataset)
        h = int(self.horizon if horizon is None else horizon)
        fn = evaluate_inductive if inductive else evaluate
        return fn(self.params_, self.model_config_, dataset, h, split)

    def score(self, dataset, y=None, split="test") -> float:
        """Negative mean test MSE, so that larger is better."""
        return -float(self.evaluate(dataset, split=split).mean())
