import numpy as np
import pytest

from dpgn.graph import random_graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graphs(count, seed=0, n_max=20, p=0.3):
    """Random connected weighted graphs with weights in (0, 2]."""
    gen = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(gen.integers(3, n_max + 1))
        out.append(random_graph(n, p, gen, weight_range=(0.0, 2.0), connected=True))
    return out
