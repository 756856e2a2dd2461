import functools
import time

import numpy as np
import pytest

from knnim.design import Design
from knnim.model import DistanceMatrix, KNeighborhoods, build_k_neighborhoods


def random_nbr(rng, n, k):
    return build_k_neighborhoods(DistanceMatrix(rng.random((n, n))), k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pairs_nbr():
    """Six units in three mutual nearest-neighbor pairs {0,1}, {2,3}, {4,5}."""
    return KNeighborhoods([[1], [0], [3], [2], [5], [4]])


@pytest.fixture(params=["crd", "bernoulli"])
def small_instance(request):
    rng = np.random.default_rng(7 if request.param == "crd" else 8)
    nbr = random_nbr(rng, 7, 2)
    design = Design.crd(7, 3) if request.param == "crd" else Design.bernoulli(7, 0.4)
    return design, nbr


@functools.lru_cache(maxsize=None)
def full_scale_simulation(model_id: int, design_kind: str):
    """(summary, seconds) for N=256, 1000 replications, seed 0, one thread.

    Cached so test files within one session share each run.
    """
    from knnim.sim import run_simulation

    start = time.perf_counter()
    summary = run_simulation(model_id, design_kind, n=256, reps=1000, seed=0, workers=1)
    return summary, time.perf_counter() - start
