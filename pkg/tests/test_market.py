import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from listmatch.distributions import DistKind, DistributionSpec
from listmatch.errors import ConfigError, DomainError
from listmatch.market import (
    UNMATCHED,
    MarketConfig,
    match_prob_approx,
    match_prob_exact,
    rank_prob_given_taken,
    run_market,
    scan_list,
    simulate_batch,
)
from listmatch.seeding import make_stream


def brute_match_prob(n, d, k):
    """Fraction of ordered lists with at least one school outside the first k."""
    lists = list(itertools.permutations(range(n), d))
    hits = sum(any(s >= k for s in lst) for lst in lists)
    return Fraction(hits, len(lists))


def brute_rank_prob(n, d, k, r):
    lists = list(itertools.permutations(range(n), d))
    hits = sum(next((j + 1 for j, s in enumerate(lst) if s >= k), None) == r for lst in lists)
    return Fraction(hits, len(lists))


# -- closed-form probabilities ------------------------------------------------

def test_match_prob_short_circuit_when_fewer_taken_than_list():
    assert match_prob_exact(10, 3, 2) == 1


@pytest.mark.parametrize("n,d,k,expected", [(4, 2, 2, Fraction(5, 6)), (5, 2, 3, Fraction(7, 10))])
def test_match_prob_exact_small(n, d, k, expected):
    assert brute_match_prob(n, d, k) == expected
    assert match_prob_exact(n, d, k, exact=True) == expected
    assert match_prob_exact(n, d, k) == pytest.approx(float(expected), abs=1e-15)


def test_match_prob_approx_values():
    assert match_prob_approx(1000, 1, 500) == 0.5
    assert match_prob_approx(4, 2, 2) == 0.75
    assert abs(match_prob_approx(4, 2, 2) - 5 / 6) <= 4 / 4
    exact = match_prob_exact(1000, 2, 500)
    assert exact == pytest.approx(1 - 500 * 499 / (1000 * 999), abs=1e-15)
    assert exact == pytest.approx(0.7502502502502503, abs=1e-15)
    assert abs(match_prob_approx(1000, 2, 500) - exact) <= 4 / 1000


def test_match_prob_large_n_no_overflow():
    p = match_prob_exact(10**6, 50, 10**6 - 10)
    assert 0.0 < p <= 1.0


@pytest.mark.parametrize("args", [(4, 5, 2), (4, 2, 5), (4, 2, -1), (4, 0, 1)])
def test_match_prob_domain_errors(args):
    with pytest.raises(DomainError):
        match_prob_exact(*args)


def test_rank_prob_examples():
    assert rank_prob_given_taken(10, 3, 0, 1) == 1
    assert rank_prob_given_taken(4, 2, 2, 2, exact=True) == Fraction(1, 3)
    assert rank_prob_given_taken(4, 2, 2, 1, exact=True) == Fraction(1, 2)
    assert brute_rank_prob(4, 2, 2, 2) == Fraction(1, 3)
    assert Fraction(1, 2) + Fraction(1, 3) == match_prob_exact(4, 2, 2, exact=True)


@given(n=st.integers(1, 7), data=st.data())
def test_rank_prob_matches_brute_force(n, data):
    d = data.draw(st.integers(1, n))
    k = data.draw(st.integers(0, n))
    r = data.draw(st.integers(1, d))
    assert rank_prob_given_taken(n, d, k, r, exact=True) == brute_rank_prob(n, d, k, r)
    assert match_prob_exact(n, d, k, exact=True) == brute_match_prob(n, d, k)


@given(n=st.integers(1, 60), data=st.data())
def test_rank_probs_sum_to_match_prob(n, data):
    d = data.draw(st.integers(1, n))
    k = data.draw(st.integers(0, n))
    exact_sum = sum(rank_prob_given_taken(n, d, k, r, exact=True) for r in range(1, d + 1))
    assert exact_sum == match_prob_exact(n, d, k, exact=True)
    float_sum = sum(rank_prob_given_taken(n, d, k, r) for r in range(1, d + 1))
    assert abs(float_sum - match_prob_exact(n, d, k)) <= 1e-12


@given(n=st.integers(1, 200), data=st.data())
def test_match_prob_monotone_in_k_and_d(n, data):
    d = data.draw(st.integers(1, n))
    k = data.draw(st.integers(0, n))
    p = match_prob_exact(n, d, k)
    if k < n:
        assert match_prob_exact(n, d, k + 1) <= p + 1e-15
    if d < n:
        assert match_prob_exact(n, d + 1, k) >= p - 1e-15


@given(n=st.integers(1, 300), data=st.data())
def test_approx_within_d_squared_over_n(n, data):
    d = data.draw(st.integers(1, n))
    k = data.draw(st.integers(0, n))
    assert abs(match_prob_approx(n, d, k) - match_prob_exact(n, d, k)) <= d * d / n + 1e-15


# -- configuration ------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n=3, d=4), dict(n=0, d=1), dict(n=3, d=0), dict(n=3, d=1, q=0),
                                dict(n=3, d=1, m=0), dict(n=3, d=1, seed=-1)])
def test_invalid_config_rejected(kw):
    with pytest.raises(ConfigError):
        MarketConfig(**kw)


def test_config_rejects_weight_length_mismatch():
    with pytest.raises(ConfigError):
        MarketConfig(n=4, d=1, dist=DistributionSpec.make(DistKind.UNIFORM, 5))


def test_config_rejects_too_few_positive_weights():
    with pytest.raises(ConfigError):
        MarketConfig(n=3, d=2, dist=DistributionSpec.custom([1.0, 0.0, 0.0]))


# -- single realization -------------------------------------------------------

def check_outcome(cfg, out):
    q, m = cfg.q, cfg.m
    t = out.taken_trajectory
    assert len(out.ranks) == len(out.matched) == m
    assert len(t) == m + 1 and t[0] == 0
    steps = np.diff(t)
    assert set(steps.tolist()) <= {0, 1}
    assert all(out.matched[i] for i in range(m) if steps[i] == 1)
    assert max(t) <= cfg.n
    if q == 1:
        assert steps.tolist() == [int(x) for x in out.matched]
    hist = out.seat_histogram_final
    assert len(hist) == q + 1 and sum(hist) == cfg.n
    assert sum(out.matched) == sum(k * c for k, c in enumerate(hist))
    assert hist[q] == t[-1]
    for r, ok in zip(out.ranks, out.matched):
        assert ok == (r is not UNMATCHED)
        if ok:
            assert 1 <= r <= cfg.d


def test_single_school_market():
    cfg = MarketConfig(n=1, d=1, m=2, seed=7)
    out = run_market(cfg, make_stream(7))
    assert out.ranks == [1, UNMATCHED]
    assert out.taken_trajectory == [0, 1, 1]


def test_full_lists_match_everyone():
    cfg = MarketConfig(n=3, d=3, m=3)
    for seed in range(20):
        out = run_market(cfg, make_stream(seed))
        assert out.matched == [True, True, True]
        assert out.taken_trajectory[3] == 3


def test_two_schools_second_student_half():
    cfg = MarketConfig(n=2, d=1, m=2)
    hits = sum(run_market(cfg, make_stream(s)).matched[1] for s in range(4000))
    assert abs(hits / 4000 - 0.5) <= 3 * (0.25 / 4000) ** 0.5


@given(
    n=st.integers(1, 12),
    q=st.integers(1, 3),
    m=st.integers(1, 30),
    kind=st.sampled_from(list(DistKind)[:5]),
    seed=st.integers(0, 2**32),
    data=st.data(),
)
def test_run_market_invariants(n, q, m, kind, seed, data):
    dist = DistributionSpec.make(kind, n)
    d = data.draw(st.integers(1, min(n, dist.support_size)))
    cfg = MarketConfig(n=n, d=d, q=q, m=m, dist=dist, seed=seed)
    check_outcome(cfg, run_market(cfg, make_stream(seed)))


@given(
    n=st.integers(1, 12),
    q=st.integers(1, 3),
    m=st.integers(1, 30),
    kind=st.sampled_from(list(DistKind)[:5]),
    seed=st.integers(0, 2**32),
    data=st.data(),
)
def test_batch_invariants(n, q, m, kind, seed, data):
    dist = DistributionSpec.make(kind, n)
    d = data.draw(st.integers(1, min(n, dist.support_size)))
    cfg = MarketConfig(n=n, d=d, q=q, m=m, dist=dist, seed=seed)
    batch = simulate_batch(cfg, 5, make_stream(seed))
    for r in range(batch.reps):
        out = batch.outcome(r)
        check_outcome(cfg, out)
        seats0 = int(batch.school0_seats[r])
        assert (out.school0_filled_by is not None) == (seats0 == q)


@given(
    n=st.integers(2, 15),
    q=st.integers(1, 2),
    seed=st.integers(0, 2**32),
    data=st.data(),
)
def test_longer_list_never_unmatches(n, q, seed, data):
    rng = np.random.default_rng(seed)
    d = data.draw(st.integers(1, n - 1))
    seats = rng.integers(0, q + 1, size=n).tolist()
    draws = rng.permutation(n).tolist()
    short = scan_list(draws, seats, q, d)
    longer = scan_list(draws, seats, q, d + 1)
    if short is not UNMATCHED:
        assert longer == short
