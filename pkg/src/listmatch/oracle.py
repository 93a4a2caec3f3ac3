"""Exact match and rank probabilities for small or uniform one-seat markets.

Under uniform lists the number of taken schools before each turn is a
Markov chain: from ``k`` it moves to ``k + 1`` with the conditional match
probability and stays otherwise. Propagating its law gives every match and
rank probability exactly (up to float rounding). :func:`enumerate_market`
instead walks every possible sequence of student lists and is the ground
truth for both the chain and the simulators.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError, SizeGuardError
from .market import UNMATCHED, match_prob_exact, rank_prob_given_taken

log = logging.getLogger(__name__)

MAX_DP_CELLS = 10**8
MAX_ENUM_WORK = 10**7


@dataclass(frozen=True, eq=False)
class TakenDistribution:
    """Law of the taken count; row ``i - 1`` is the pmf of T_i on 0..n."""

    n: int
    d: int
    pmf_by_student: np.ndarray

    @property
    def horizon(self) -> int:
        return self.pmf_by_student.shape[0]

    def row(self, i: int) -> np.ndarray:
        if not 1 <= i <= self.horizon:
            raise DomainError(f"student {i} outside 1..{self.horizon}")
        return self.pmf_by_student[i - 1]

    def mean_taken(self) -> np.ndarray:
        """E[T_i] for i = 1..horizon."""
        return self.pmf_by_student @ np.arange(self.n + 1)


def _check_nd(n: int, d: int) -> None:
    if not 1 <= d <= n:
        raise DomainError(f"need 1 <= d <= n, got n={n}, d={d}")


def match_prob_vector(n: int, d: int) -> np.ndarray:
    """Conditional match probability for every taken count k = 0..n."""
    _check_nd(n, d)
    k = np.arange(n + 1, dtype=float)
    all_taken = np.ones(n + 1)
    for j in range(d):
        all_taken *= np.clip(k - j, 0, None) / (n - j)
    return 1.0 - all_taken


def rank_cdf_vector(n: int, d: int, top: int) -> np.ndarray:
    """P(rank <= top | T = t) for every t = 0..n."""
    _check_nd(n, d)
    if not 1 <= top <= d:
        raise DomainError(f"need 1 <= k <= d, got k={top}, d={d}")
    # the event only looks at the first `top` draws
    return match_prob_vector(n, top)


def taken_distribution(n: int, d: int, horizon: int) -> TakenDistribution:
    """Propagate the law of T_1..T_horizon."""
    _check_nd(n, d)
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    if horizon * (n + 1) > MAX_DP_CELLS:
        raise SizeGuardError(f"{horizon} x {n + 1} cells exceeds the {MAX_DP_CELLS} budget")
    p = match_prob_vector(n, d)
    stay = 1.0 - p
    out = np.zeros((horizon, n + 1))
    out[0, 0] = 1.0
    for i in range(1, horizon):
        prev = out[i - 1]
        row = out[i]
        row[:] = prev * stay
        row[1:] += prev[:-1] * p[:-1]
        total = row.sum()
        if abs(total - 1.0) > 1e-9:
            log.warning("renormalizing taken pmf at student %d (sum=%r)", i + 1, total)
            row /= total
    return TakenDistribution(n, d, out)


def exact_match_probs(n: int, d: int, horizon: int) -> np.ndarray:
    """P(M_i = 1) for i = 1..horizon."""
    dist = taken_distribution(n, d, horizon)
    return dist.pmf_by_student @ match_prob_vector(n, d)


def exact_match_prob(n: int, d: int, i: int) -> float:
    """P(student i is matched) in the uniform one-seat market."""
    if i < 1:
        raise DomainError("student index must be >= 1")
    return float(exact_match_probs(n, d, i)[-1])


def exact_rank_cdfs(n: int, d: int, horizon: int, top: int) -> np.ndarray:
    """P(K_i <= top) for i = 1..horizon."""
    dist = taken_distribution(n, d, horizon)
    return dist.pmf_by_student @ rank_cdf_vector(n, d, top)


def exact_rank_cdf(n: int, d: int, i: int, k: int) -> float:
    """P(student i gets one of their top-k schools)."""
    if i < 1:
        raise DomainError("student index must be >= 1")
    return float(exact_rank_cdfs(n, d, i, k)[-1])


# -- exhaustive enumeration ---------------------------------------------------

@dataclass(frozen=True)
class MarketLaw:
    """Exact joint law of the rank vector of the first ``m`` students.

    ``joint`` maps a tuple of ranks (ints, or ``UNMATCHED``) to its
    probability. For uniform lists the probabilities are Fractions.
    """

    n: int
    d: int
    m: int
    joint: dict

    def taken(self, ranks: tuple) -> tuple[int, ...]:
        """Taken trajectory T_1..T_{m+1} implied by a rank vector (q = 1)."""
        return tuple(itertools.accumulate((r is not UNMATCHED for r in ranks), initial=0))

    def match_prob(self, i: int):
        return sum(p for ranks, p in self.joint.items() if ranks[i - 1] is not UNMATCHED)

    def rank_cdf(self, i: int, k: int):
        return sum(
            p for ranks, p in self.joint.items()
            if ranks[i - 1] is not UNMATCHED and ranks[i - 1] <= k
        )

    def rank_pmf(self, i: int) -> dict:
        out: dict = {}
        for ranks, p in self.joint.items():
            out[ranks[i - 1]] = out.get(ranks[i - 1], 0) + p
        return out

    def taken_mean(self, i: int):
        """E[T_i], for i = 1..m+1."""
        return sum(p * self.taken(ranks)[i - 1] for ranks, p in self.joint.items())


def _ordered_lists(n: int, d: int, weights):
    """Yield (list, probability) over all ordered d-tuples of distinct schools."""
    for lst in itertools.permutations(range(n), d):
        if weights is None:
            yield lst, Fraction(1, math.perm(n, d))
            continue
        p, left = 1.0, 1.0
        for s in lst:
            if weights[s] == 0:
                p = 0.0
                break
            p *= weights[s] / left
            left -= weights[s]
        if p > 0:
            yield lst, p


def enumerate_market(n: int, d: int, m: int, weights=None) -> MarketLaw:
    """Exact law of the ranks by visiting every student list at every turn.

    States with the same taken set and rank history are merged before the
    next student's lists are expanded; the work budget counts
    (states x lists) per turn.
    """
    _check_nd(n, d)
    if m < 1:
        raise DomainError("m must be >= 1")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        if weights.size != n:
            raise DomainError("weights must have length n")
    if math.perm(n, d) > MAX_ENUM_WORK:
        raise SizeGuardError(f"{math.perm(n, d)} ordered lists exceeds {MAX_ENUM_WORK}")
    lists = list(_ordered_lists(n, d, weights))
    # outcome of each list given a taken set only depends on the first free entry
    one = Fraction(1) if weights is None else 1.0
    states: dict = {(frozenset(), ()): one}
    for _ in range(m):
        if len(states) * len(lists) > MAX_ENUM_WORK:
            raise SizeGuardError(
                f"{len(states)} states x {len(lists)} lists exceeds {MAX_ENUM_WORK}"
            )
        nxt: dict = {}
        for (taken, ranks), p in states.items():
            for lst, pl in lists:
                for pos, s in enumerate(lst):
                    if s not in taken:
                        key = (taken | {s}, ranks + (pos + 1,))
                        break
                else:
                    key = (taken, ranks + (UNMATCHED,))
                nxt[key] = nxt.get(key, 0) + p * pl
        states = nxt
    joint: dict = {}
    for (_, ranks), p in states.items():
        joint[ranks] = joint.get(ranks, 0) + p
    return MarketLaw(n, d, m, joint)


def enumerate_school_filled(n: int, d: int, m: int, school: int = 0) -> list:
    """P(school is taken before student i) for i = 1..m+1, by enumeration."""
    _check_nd(n, d)
    lists = list(_ordered_lists(n, d, None))
    states: dict = {frozenset(): Fraction(1)}
    out = [Fraction(0)]
    for _ in range(m):
        nxt: dict = {}
        for taken, p in states.items():
            for lst, pl in lists:
                key = taken
                for s in lst:
                    if s not in taken:
                        key = taken | {s}
                        break
                nxt[key] = nxt.get(key, 0) + p * pl
        states = nxt
        out.append(sum(p for t, p in states.items() if school in t))
    return out


def exact_match_prob_rational(n: int, d: int, i: int) -> Fraction:
    """Chain propagation in rational arithmetic (small n only)."""
    _check_nd(n, d)
    pmf = {0: Fraction(1)}
    for _ in range(i - 1):
        nxt: dict = {}
        for k, p in pmf.items():
            a = match_prob_exact(n, d, k, exact=True)
            if a:
                nxt[k + 1] = nxt.get(k + 1, 0) + p * a
            nxt[k] = nxt.get(k, 0) + p * (1 - a)
        pmf = nxt
    return sum(p * match_prob_exact(n, d, k, exact=True) for k, p in pmf.items())


def rank_cdf_given_taken(n: int, d: int, t: int, k: int):
    """Sum of :func:`rank_prob_given_taken` over positions 1..k."""
    return sum(rank_prob_given_taken(n, d, t, r) for r in range(1, k + 1))
