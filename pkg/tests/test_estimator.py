import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dpgn.estimator import DPGNForecaster

from helpers import small_dataset

FAST = dict(iterations=20, hidden_dim=6, batch_size=2, eval_every=10, horizon=2, lam=0.1, alpha=0.1)


def test_get_set_params():
    est = DPGNForecaster(model="gn-skip", hidden_dim=16)
    params = est.get_params()
    assert params["model"] == "gn-skip" and params["hidden_dim"] == 16
    assert params["lam"] == 1e-5 and params["alpha"] == 0.001
    est.set_params(lam=0.5)
    assert clone(est).lam == 0.5


def test_fit_predict_score():
    ds = small_dataset()
    est = DPGNForecaster(**FAST).fit(ds)
    pred = est.predict(ds)
    assert pred.shape == (len(ds.windows("test", 2)), 2, ds.graph.n_nodes, 1)
    mse = est.evaluate(ds)
    assert est.score(ds) == pytest.approx(-mse.mean())
    assert est.evaluate(ds, horizon=4).shape == (4,)
    assert est.n_features_in_ == ds.d_in


def test_unfitted():
    with pytest.raises(NotFittedError):
        DPGNForecaster().predict(small_dataset())


def test_rejects_arrays():
    with pytest.raises(TypeError):
        DPGNForecaster().fit(np.zeros((3, 3)))


def test_fit_is_deterministic():
    ds = small_dataset()
    a = DPGNForecaster(**FAST, seed=1).fit(ds)
    b = DPGNForecaster(**FAST, seed=1).fit(ds)
    assert a.log_ == b.log_
    np.testing.assert_array_equal(a.predict(ds), b.predict(ds))


def test_invalid_param_surfaces_at_fit():
    with pytest.raises(ValueError, match="learning_rate"):
        DPGNForecaster(**{**FAST, "learning_rate": -1}).fit(small_dataset())
