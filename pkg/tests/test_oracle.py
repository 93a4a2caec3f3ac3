import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from listmatch import oracle
from listmatch.errors import DomainError, SizeGuardError
from listmatch.market import UNMATCHED


def brute_law(n, d, m):
    """Joint law of ranks by looping over every combination of student lists."""
    lists = list(itertools.permutations(range(n), d))
    law: dict = {}
    w = Fraction(1, len(lists) ** m)
    for combo in itertools.product(lists, repeat=m):
        taken: set = set()
        ranks = []
        for lst in combo:
            for j, s in enumerate(lst):
                if s not in taken:
                    taken.add(s)
                    ranks.append(j + 1)
                    break
            else:
                ranks.append(UNMATCHED)
        law[tuple(ranks)] = law.get(tuple(ranks), 0) + w
    return law


def test_taken_distribution_two_schools():
    td = oracle.taken_distribution(2, 1, 3)
    np.testing.assert_allclose(td.row(1), [1, 0, 0])
    np.testing.assert_allclose(td.row(2), [0, 1, 0])
    np.testing.assert_allclose(td.row(3), [0, 0.5, 0.5])


@pytest.mark.parametrize("n", [1, 3, 7, 20])
def test_full_lists_give_point_masses(n):
    td = oracle.taken_distribution(n, n, n + 1)
    for i in range(1, n + 2):
        row = td.row(i)
        assert row[i - 1] == pytest.approx(1.0)


def test_expected_taken_matches_brute_force(constants):
    law = brute_law(5, 2, 3)
    mean_t4 = sum(p * sum(r is not UNMATCHED for r in ranks) for ranks, p in law.items())
    td = oracle.taken_distribution(5, 2, 4)
    assert td.row(4) @ np.arange(6) == pytest.approx(float(mean_t4), abs=1e-12)
    assert float(mean_t4) == pytest.approx(constants["enum_n5_d2_m4_taken_mean_4"], abs=1e-14)


@given(n=st.integers(1, 30), data=st.data())
def test_taken_rows_are_distributions(n, data):
    d = data.draw(st.integers(1, n))
    horizon = data.draw(st.integers(1, 2 * n + 2))
    td = oracle.taken_distribution(n, d, horizon)
    assert td.row(1)[0] == 1.0
    for i in range(1, horizon + 1):
        row = td.row(i)
        assert abs(row.sum() - 1) <= 1e-12
        assert row.min() >= 0
        # after i-1 students at most i-1 schools are taken
        assert np.all(row[i:] == 0)


def test_exact_match_prob_examples(constants):
    assert oracle.exact_match_prob(2, 1, 2) == pytest.approx(0.5, abs=1e-15)
    for n, d in [(1, 1), (5, 3), (1000, 7)]:
        assert oracle.exact_match_prob(n, d, 1) == 1.0
    p = oracle.exact_match_prob(1000, 1, 1000)
    assert 1 / 3 <= p <= 2 / 5
    assert p == pytest.approx(constants["exact_match_prob_n1000_d1_i1000"], rel=1e-13)


def test_exact_rank_cdf_examples():
    assert oracle.exact_rank_cdf(2, 1, 2, 1) == pytest.approx(0.5)
    assert oracle.exact_rank_cdf(4, 2, 2, 1) == pytest.approx(0.75, abs=1e-15)
    for n, d, i in [(10, 3, 7), (50, 5, 60)]:
        assert oracle.exact_rank_cdf(n, d, i, d) == pytest.approx(oracle.exact_match_prob(n, d, i), abs=1e-15)


def test_rank_cdf_rejects_k_above_d():
    with pytest.raises(DomainError):
        oracle.exact_rank_cdf(5, 2, 3, 3)


def test_memory_guard():
    with pytest.raises(SizeGuardError):
        oracle.taken_distribution(10**5, 2, 10**4)


def test_enumeration_examples(constants):
    assert oracle.enumerate_market(2, 1, 2).match_prob(2) == Fraction(1, 2)
    assert oracle.enumerate_market(3, 3, 3).match_prob(3) == 1
    p = oracle.enumerate_market(3, 2, 3).match_prob(3)
    assert p == Fraction(2, 3)
    assert float(p) == pytest.approx(constants["enum_n3_d2_m3_p_match_3"], abs=1e-14)


@pytest.mark.parametrize("n,d,m", [(2, 1, 3), (3, 2, 3), (4, 2, 3), (3, 1, 4)])
def test_enumeration_matches_brute_force(n, d, m):
    assert oracle.enumerate_market(n, d, m).joint == brute_law(n, d, m)


def test_enumeration_size_guard(monkeypatch):
    with pytest.raises(SizeGuardError):
        oracle.enumerate_market(14, 7, 1)
    monkeypatch.setattr(oracle, "MAX_ENUM_WORK", 1_000)
    oracle.enumerate_market(4, 2, 2)
    with pytest.raises(SizeGuardError):
        oracle.enumerate_market(5, 2, 6)


@pytest.mark.parametrize("n", range(1, 6))
def test_dp_agrees_with_enumeration(n):
    for d in range(1, n + 1):
        m = 5 if n <= 4 else 4
        law = oracle.enumerate_market(n, d, m)
        probs = oracle.exact_match_probs(n, d, m)
        for i in range(1, m + 1):
            assert float(law.match_prob(i)) == pytest.approx(probs[i - 1], abs=1e-12)
            assert law.match_prob(i) == oracle.exact_match_prob_rational(n, d, i)
            for k in range(1, d + 1):
                assert float(law.rank_cdf(i, k)) == pytest.approx(
                    oracle.exact_rank_cdf(n, d, i, k), abs=1e-12)
        td = oracle.taken_distribution(n, d, m + 1)
        for i in range(1, m + 2):
            assert float(law.taken_mean(i)) == pytest.approx(td.row(i) @ np.arange(n + 1), abs=1e-12)


def test_weighted_enumeration_reduces_to_uniform():
    uni = oracle.enumerate_market(4, 2, 3)
    wtd = oracle.enumerate_market(4, 2, 3, weights=[0.25] * 4)
    for ranks, p in uni.joint.items():
        assert wtd.joint[ranks] == pytest.approx(float(p), abs=1e-14)


def test_school_filled_equals_expected_taken_fraction():
    n, d, m = 4, 2, 4
    filled = oracle.enumerate_school_filled(n, d, m)
    td = oracle.taken_distribution(n, d, m + 1)
    for i in range(1, m + 2):
        assert float(filled[i - 1]) == pytest.approx(td.row(i) @ np.arange(n + 1) / n, abs=1e-12)


@pytest.mark.parametrize("n", [100, 500, 1000])
def test_monotone_in_d(n):
    prev = oracle.exact_match_probs(n, 1, n)
    for d in range(2, 21):
        cur = oracle.exact_match_probs(n, d, n)
        assert np.all(cur >= prev - 1e-12), (n, d)
        prev = cur


def test_expected_taken_monotone_in_d():
    n = 200
    prev = oracle.taken_distribution(n, 1, 2 * n).mean_taken()
    for d in range(2, 11):
        cur = oracle.taken_distribution(n, d, 2 * n).mean_taken()
        assert np.all(cur >= prev - 1e-9)
        prev = cur


def test_crossing_beyond_balanced_market(constants):
    i = 1250
    p1, p2 = oracle.exact_match_prob(1000, 1, i), oracle.exact_match_prob(1000, 2, i)
    assert p1 > p2
    assert p1 == pytest.approx(constants["exact_match_prob_n1000_d1_i1250"], rel=1e-12)
    assert p2 == pytest.approx(constants["exact_match_prob_n1000_d2_i1250"], rel=1e-12)
