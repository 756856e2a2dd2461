import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnim.design import Design, JointTables
from knnim.estimators import (
    ExperimentData,
    PositivityError,
    Weights,
    contrast,
    decomposition_gaps,
    estimate_a1,
    estimate_a2,
    estimate_all,
    evaluate,
    ht_mean,
    low_count_exposures,
    table_contrasts,
)
from knnim.model import Exposure, KNeighborhoods, w_star
from knnim.oracle import (
    PotentialOutcomeTable,
    estimand,
    estimand_a1,
    estimator_moments,
    exact_estimator_moments,
)

from conftest import random_nbr

E = Exposure


class FixedMarginal(JointTables):
    """Tables whose marginal probability is pinned, for checking the HT arithmetic."""

    def __init__(self, design, nbr, pi):
        super().__init__(design, nbr)
        self.pi = pi

    def marginal(self, e):
        return self.pi


@pytest.fixture
def two_units():
    return KNeighborhoods([[1], [0]]), Design.bernoulli(2, 0.5)


@pytest.mark.parametrize("pi, expected", [(0.5, 6.0), (1.0, 3.0)])
def test_ht_mean_arithmetic(two_units, pi, expected):
    nbr, design = two_units
    data = ExperimentData(nbr, design, [1, 1], [2.0, 4.0], tables=FixedMarginal(design, nbr, pi))
    assert ht_mean(data, E(1, (1,))) == pytest.approx(expected, abs=1e-12)


def test_ht_mean_unobserved_exposure_is_zero(two_units):
    nbr, design = two_units
    data = ExperimentData(nbr, design, [1, 1], [2.0, 4.0])
    assert ht_mean(data, E(0, (0,))) == 0.0
    # (1,(1)) has probability 1/4 under Bernoulli(1/2): (2 + 4) / 0.25 / 2
    assert ht_mean(data, E(1, (1,))) == pytest.approx(12.0)


def test_table_rows():
    assert [c.label for c in table_contrasts(1)] == ["tot", "dir", "dir*", "ind", "ind*", "nn1", "nn1*"]
    assert len(table_contrasts(2)) == 9
    labels = [c.label for c in table_contrasts(3)]
    assert len(labels) == 11 and labels[-2:] == ["nn3", "nn3*"]


def test_contrast_exposures_k2():
    nn2 = contrast("nn", "A1", 2, 2)
    assert nn2.plus == (E(0, (1, 1)),) and nn2.minus == (E(0, (1, 0)),)
    dir_star = contrast("direct", "A2", 2)
    assert dir_star.plus == (E(1, (1, 1)), E(1, (0, 0)))
    assert dir_star.minus == (E(0, (1, 1)), E(0, (0, 0)))
    ind_star = contrast("indirect", "A2", 2)
    assert ind_star.coefficients() == {
        E(1, (1, 1)): 0.5, E(0, (1, 1)): 0.5, E(1, (0, 0)): -0.5, E(0, (0, 0)): -0.5
    }
    assert contrast("nn", "A2", 3, 1).plus == (w_star(1, 1, 3), w_star(1, 0, 3))


@pytest.mark.parametrize(
    "args",
    [("nn", "A1", 2, 3), ("nn", "A1", 2, None), ("direct", "A1", 2, 1), ("total", "A2", 2, None)],
)
def test_contrast_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        contrast(*args)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        Weights(0.3, 0.6)
    assert Weights(0.25, 0.75).is_default is False


def random_data(seed, n=40, k=2, crd=True):
    rng = np.random.default_rng(seed)
    nbr = random_nbr(rng, n, k)
    design = Design.crd(n, n // 2) if crd else Design.bernoulli(n, 0.5)
    w = np.zeros(n, int)
    w[rng.choice(n, n // 2, replace=False)] = 1
    return ExperimentData(nbr, design, w, rng.normal(size=n) + 3)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("crd", [True, False])
def test_decompositions_hold_per_realization(seed, crd):
    data = random_data(seed, crd=crd)
    gaps = decomposition_gaps(estimate_all(data))
    assert max(gaps.values()) <= 1e-12


def test_decomposition_needs_equal_weights():
    data = random_data(0)
    with pytest.raises(ValueError):
        decomposition_gaps(estimate_all(data), Weights(0.3, 0.7))


def test_general_weights_combine_the_two_arms():
    data = random_data(1)
    w = Weights(0.3, 0.7)
    est = estimate_a2(data, "direct", w).estimate
    hi = ht_mean(data, E(1, (1, 1))) - ht_mean(data, E(0, (1, 1)))
    lo = ht_mean(data, E(1, (0, 0))) - ht_mean(data, E(0, (0, 0)))
    assert est == pytest.approx(0.3 * hi + 0.7 * lo, abs=1e-12)


def test_total_a2_routes_to_a1():
    data = random_data(2)
    assert estimate_a2(data, "total") == estimate_a1(data, "total")


def test_crd_treated_count_checked():
    nbr = KNeighborhoods([[1], [0], [3], [2]])
    with pytest.raises(ValueError, match="n_t=2"):
        ExperimentData(nbr, Design.crd(4, 2), [1, 0, 0, 0], np.zeros(4))


def test_positivity_refusal():
    # CRD with one treated unit of four: any exposure with two or more treated is impossible
    nbr = KNeighborhoods([[1, 2], [0, 2], [1, 3], [2, 1]])
    data = ExperimentData(nbr, Design.crd(4, 1), [1, 0, 0, 0], np.ones(4))
    with pytest.raises(PositivityError) as err:
        estimate_a1(data, "total")
    assert err.value.exposure == E(1, (1, 1))
    # an estimator whose exposures are all possible still works
    assert np.isfinite(estimate_a1(data, "nn", ell=1).estimate)


def test_input_validation(two_units):
    nbr, design = two_units
    with pytest.raises(ValueError):
        ExperimentData(nbr, design, [1, 2], [0.0, 0.0])
    with pytest.raises(ValueError):
        ExperimentData(nbr, design, [1, 0], [0.0, np.nan])
    with pytest.raises(ValueError):
        ExperimentData(nbr, design, [1, 0, 1], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="another design"):
        ExperimentData(nbr, design, [1, 0], [0, 0], tables=JointTables(Design.bernoulli(2, 0.3), nbr))


def test_inputs_are_copied(two_units):
    nbr, design = two_units
    y = np.array([1.0, 2.0])
    data = ExperimentData(nbr, design, [1, 0], y)
    y[0] = 99.0
    assert data.y[0] == 1.0 and y.flags.writeable


def test_low_count_warning(caplog):
    data = random_data(3)
    with caplog.at_level("WARNING"):
        low = low_count_exposures(data)
    assert low and all(n < 30 for n in low.values())
    assert "observed" in caplog.text


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_ht_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    nbr = random_nbr(rng, 12, 1)
    design = Design.crd(12, 6)
    w = np.zeros(12, int)
    w[rng.choice(12, 6, replace=False)] = 1
    y1, y2 = rng.normal(size=12), rng.normal(size=12)
    tables = JointTables(design, nbr)
    d1 = ExperimentData(nbr, design, w, y1, tables=tables)
    d2 = ExperimentData(nbr, design, w, y2, tables=tables)
    d = ExperimentData(nbr, design, w, a * y1 + b * y2, tables=tables)
    for e in (E(0, (0,)), E(1, (1,))):
        want = a * ht_mean(d1, e) + b * ht_mean(d2, e)
        assert ht_mean(d, e) == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("k, crd", [(1, True), (1, False), (2, True), (2, False)])
def test_unbiased_by_enumeration(k, crd):
    rng = np.random.default_rng(100 + 10 * k + crd)
    n = 8
    nbr = random_nbr(rng, n, k)
    design = Design.crd(n, 4) if crd else Design.bernoulli(n, 0.45)
    pot = PotentialOutcomeTable.random(rng, n, k)
    contrasts = table_contrasts(k)
    prod = estimator_moments(design, nbr, pot, contrasts)
    for ic, c in enumerate(contrasts):
        assert prod.mean[ic] == pytest.approx(estimand(pot, c), abs=1e-10)
        assert exact_estimator_moments(design, nbr, pot, c)[0] == pytest.approx(
            estimand(pot, c), abs=1e-10
        )


def test_a2_estimators_target_the_effect_without_weak_interaction():
    rng = np.random.default_rng(5)
    n, k = 8, 2
    nbr = random_nbr(rng, n, k)
    design = Design.crd(n, 4)
    pot = PotentialOutcomeTable.no_weak_interaction(rng, n, k)
    contrasts = table_contrasts(k, Weights(0.2, 0.8))
    prod = estimator_moments(design, nbr, pot, contrasts)
    for ic, c in enumerate(contrasts):
        assert prod.mean[ic] == pytest.approx(estimand_a1(pot, c), abs=1e-10)


def test_additive_model_recovers_effects():
    rng = np.random.default_rng(9)
    n, k = 8, 2
    nbr = random_nbr(rng, n, k)
    design = Design.bernoulli(n, 0.5)
    pot = PotentialOutcomeTable.additive(rng.normal(size=n), 1.5, [2.0, 0.5])
    want = {"tot": 4.0, "dir": 1.5, "dir*": 1.5, "ind": 2.5, "ind*": 2.5,
            "nn1": 2.0, "nn1*": 2.0, "nn2": 0.5, "nn2*": 0.5}
    contrasts = table_contrasts(k)
    prod = estimator_moments(design, nbr, pot, contrasts)
    for ic, c in enumerate(contrasts):
        assert prod.mean[ic] == pytest.approx(want[c.label], abs=1e-10)


def test_evaluate_zero_responses():
    rng = np.random.default_rng(4)
    nbr = random_nbr(rng, 10, 1)
    w = np.array([1, 0] * 5)
    data = ExperimentData(nbr, Design.crd(10, 5), w, np.zeros(10))
    for c in table_contrasts(1):
        r = evaluate(data, c)
        assert r.estimate == 0.0 and r.variance == 0.0
