from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnim.design import (
    Design,
    JointTables,
    all_marginals,
    binom,
    binom_ratio,
    check_compatibility,
    joint_probability,
    marginal_probability,
)
from knnim.model import Exposure, KNeighborhoods, all_exposures
from knnim.oracle import enumerated_codes, exact_joint_matrix, exact_marginals

from conftest import random_nbr

E = Exposure


def test_design_validation():
    with pytest.raises(ValueError):
        Design(4)
    with pytest.raises(ValueError):
        Design(4, n_t=2, p=0.5)
    with pytest.raises(ValueError):
        Design.crd(4, 0)
    with pytest.raises(ValueError):
        Design.crd(4, 4)
    with pytest.raises(ValueError):
        Design.bernoulli(4, 1.0)
    assert Design.crd(4, 2).describe() == "CRD(n=4, n_t=2)"


def test_binom_edges():
    assert binom(5, -1) == 0 and binom(5, 6) == 0 and binom(-1, 0) == 0
    assert binom(0, 0) == 1


def test_binom_ratio_large_n_is_exact():
    # a ratio of two ~10^300 integers, correctly rounded
    got = binom_ratio(1000, 499, 1002, 500)
    want = Fraction(comb(1000, 499), comb(1002, 500))
    assert got == float(want)
    assert binom_ratio(3, 5, 10, 5) == 0.0


def test_crd_n4_marginals():
    nbr = KNeighborhoods([[1], [0], [3], [2]])
    m = all_marginals(Design.crd(4, 2), nbr, 0)
    assert m[E(1, (1,))] == pytest.approx(1 / 6, abs=1e-15)
    assert m[E(1, (0,))] == pytest.approx(1 / 3, abs=1e-15)
    assert m[E(0, (1,))] == pytest.approx(1 / 3, abs=1e-15)
    assert m[E(0, (0,))] == pytest.approx(1 / 6, abs=1e-15)


def test_bernoulli_n2_marginals():
    nbr = KNeighborhoods([[1], [0]])
    m = all_marginals(Design.bernoulli(2, 0.3), nbr, 0)
    assert [m[e] for e in all_exposures(1)] == pytest.approx([0.49, 0.21, 0.21, 0.09], abs=1e-15)


def test_compatibility_shared_neighbor():
    # 1-based 1->[2], 3->[2]; e_1 = (1,(1)), e_3 = (0,(1))
    nbr = KNeighborhoods([[1], [0], [1], [2]])
    ov = check_compatibility(nbr, 0, E(1, (1,)), 2, E(0, (1,)))
    assert ov.compatible and ov.b_ij == 1
    assert (ov.n_itK, ov.n_jitK, ov.n_jicK) == (2, 0, 1)
    clash = check_compatibility(nbr, 0, E(1, (1,)), 2, E(0, (0,)))
    assert not clash.compatible
    assert joint_probability(Design.crd(4, 2), nbr, 0, E(1, (1,)), 2, E(0, (0,))) == 0.0


def test_disjoint_crd_joint(pairs_nbr):
    design = Design.crd(6, 3)
    got = joint_probability(design, pairs_nbr, 0, E(1, (1,)), 2, E(0, (0,)))
    assert got == pytest.approx(0.1, abs=1e-15)
    ex = exact_joint_matrix(design, pairs_nbr, E(1, (1,)), E(0, (0,)))
    assert ex[0, 2] == pytest.approx(0.1, abs=1e-15)


def test_disjoint_bernoulli_joint_factorizes(pairs_nbr):
    design = Design.bernoulli(6, 0.3)
    for e1 in all_exposures(1):
        for e2 in all_exposures(1):
            got = joint_probability(design, pairs_nbr, 0, e1, 4, e2)
            want = marginal_probability(design, pairs_nbr, 0, e1) * marginal_probability(
                design, pairs_nbr, 4, e2
            )
            assert got == pytest.approx(want, abs=1e-15)


def test_same_unit_rejected(pairs_nbr):
    with pytest.raises(ValueError):
        joint_probability(Design.crd(6, 3), pairs_nbr, 1, E(0, (0,)), 1, E(0, (0,)))


def test_k_mismatch_rejected(pairs_nbr):
    with pytest.raises(ValueError, match="K="):
        marginal_probability(Design.crd(6, 3), pairs_nbr, 0, E(1, (0, 0)))


def test_n_mismatch_rejected(pairs_nbr):
    with pytest.raises(ValueError, match="n="):
        JointTables(Design.crd(8, 3), pairs_nbr)


def test_crd_needs_room_for_both_neighborhoods():
    # N=3, K=1: every pair of closed neighborhoods overlaps, some patterns impossible
    nbr = KNeighborhoods([[1], [0], [1]])
    design = Design.crd(3, 1)
    # unit 0 and unit 2 both (1,(0)) would need two treated units
    assert joint_probability(design, nbr, 0, E(1, (0,)), 2, E(1, (0,))) == 0.0
    ex = exact_joint_matrix(design, nbr, E(1, (0,)), E(1, (0,)))
    assert ex[0, 2] == 0.0


@pytest.mark.parametrize("n, k", [(6, 1), (7, 2), (8, 3), (9, 2), (10, 4)])
@pytest.mark.parametrize("kind", ["crd", "bernoulli"])
def test_closed_forms_match_enumeration(n, k, kind):
    rng = np.random.default_rng(n * 10 + k)
    nbr = random_nbr(rng, n, k)
    design = Design.crd(n, n // 2) if kind == "crd" else Design.bernoulli(n, 0.35)
    tables = JointTables(design, nbr)
    exact = exact_marginals(design, nbr)
    pre = enumerated_codes(design, nbr)
    for e1 in all_exposures(k):
        assert np.allclose(exact[:, e1.code], tables.marginal(e1), atol=1e-12, rtol=0)
        for e2 in all_exposures(k):
            want = exact_joint_matrix(design, nbr, e1, e2, precomputed=pre)
            assert np.allclose(tables.joint_matrix(e1, e2), want, atol=1e-12, rtol=0)


def test_matrix_path_matches_scalar_path(small_instance):
    design, nbr = small_instance
    tables = JointTables(design, nbr)
    for e1 in all_exposures(nbr.k):
        for e2 in all_exposures(nbr.k):
            m = tables.joint_matrix(e1, e2)
            for i in range(nbr.n):
                for j in range(nbr.n):
                    if i != j:
                        assert m[i, j] == joint_probability(design, nbr, i, e1, j, e2)
            diag = np.diag(m)
            assert np.all(diag == (tables.marginal(e1) if e1 == e2 else 0.0))


def test_pair_table_fields(small_instance):
    design, nbr = small_instance
    tables = JointTables(design, nbr)
    e1, e2 = E(1, (0, 1)), E(0, (1, 1))
    tab = tables.pair(e1, e2)
    assert tables.pair(e1, e2) is tab
    assert np.array_equal(tab.zero, tab.joint == 0)
    assert np.array_equal(tab.zero_rows, tab.zero.sum(axis=1))
    ok = ~tab.zero
    assert np.allclose(tab.q[ok], 1 - tab.pi1 * tab.pi2 / tab.joint[ok])
    assert np.all(tab.q[tab.zero] == 0)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(3, 30),
    data=st.data(),
    seed=st.integers(0, 2**32 - 1),
)
def test_probability_invariants(n, data, seed):
    k = data.draw(st.integers(1, min(n - 1, 4)))
    if data.draw(st.booleans()):
        design = Design.crd(n, data.draw(st.integers(1, n - 1)))
    else:
        design = Design.bernoulli(n, data.draw(st.floats(0.01, 0.99)))
    nbr = random_nbr(np.random.default_rng(seed), n, k)
    tables = JointTables(design, nbr)
    marg = {e: tables.marginal(e) for e in all_exposures(k)}
    assert sum(marg.values()) == pytest.approx(1.0, abs=1e-12)
    assert marginal_probability(design, nbr, n - 1, E(0, (0,) * k)) == marg[E(0, (0,) * k)]
    e1 = data.draw(st.sampled_from(all_exposures(k)))
    e2 = data.draw(st.sampled_from(all_exposures(k)))
    m12 = tables.joint_matrix(e1, e2)
    m21 = tables.joint_matrix(e2, e1)
    assert np.array_equal(m12, m21.T)
    assert np.all(m12 <= min(marg[e1], marg[e2]) + 1e-15)
    assert np.all(m12 >= 0)
    # joint over all e2 for a fixed pair sums back to the marginal of e1
    total = sum(tables.joint_matrix(e1, f) for f in all_exposures(k))
    off = ~np.eye(n, dtype=bool)
    assert np.allclose(total[off], marg[e1], atol=1e-12)
