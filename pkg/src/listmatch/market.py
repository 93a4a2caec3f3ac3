"""Discrete Serial Dictatorship market with bounded, randomly drawn lists.

Students arrive in a fixed order. Each one scans a list of ``d`` distinct
schools and takes the first school that still has a free seat. Lists are
drawn lazily (deferred decisions): the next school is drawn only when the
previous one turned out to be full, so the draw index is the rank.

Two simulators share these semantics:

* :func:`run_market` plays a single realization, one student at a time.
  It is the reference implementation.
* :func:`simulate_batch` plays many independent realizations at once,
  vectorized across replications. The Monte Carlo layer uses it.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .distributions import DistKind, DistributionSpec
from .errors import ConfigError, DomainError

# cap on vectorized rejection rounds before the exact per-row fallback
_MAX_REJECTION_ROUNDS = 64


class Unmatched(enum.Enum):
    """Rank of a student who found every school on their list full."""

    UNMATCHED = "unmatched"

    def __repr__(self) -> str:
        return "UNMATCHED"

    def __str__(self) -> str:
        return "inf"


UNMATCHED = Unmatched.UNMATCHED
Rank = int | Unmatched


@dataclass(frozen=True, eq=False)
class MarketConfig:
    n: int
    d: int
    q: int = 1
    m: int = 1
    dist: DistributionSpec | None = None
    seed: int = 42

    def __post_init__(self):
        for name in ("n", "d", "q", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.d <= self.n:
            raise ConfigError(f"d must satisfy 1 <= d <= n={self.n}, got {self.d}")
        if self.q < 1:
            raise ConfigError(f"q must be >= 1, got {self.q}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.dist is None:
            object.__setattr__(self, "dist", DistributionSpec.make(DistKind.UNIFORM, self.n))
        if self.dist.n != self.n:
            raise ConfigError(f"distribution has {self.dist.n} weights, expected n={self.n}")
        if self.dist.support_size < self.d:
            raise ConfigError(
                f"only {self.dist.support_size} schools have positive weight; "
                f"cannot draw d={self.d} distinct schools"
            )

    def replace(self, **changes) -> "MarketConfig":
        fields = dict(n=self.n, d=self.d, q=self.q, m=self.m, dist=self.dist, seed=self.seed)
        fields.update(changes)
        if "n" in changes and "dist" not in changes and self.dist.kind is not DistKind.CUSTOM:
            fields["dist"] = DistributionSpec.make(self.dist.kind, fields["n"])
        return MarketConfig(**fields)


@dataclass
class SimOutcome:
    """One realization of the market.

    ``taken_trajectory[i]`` (0-based) is the number of schools with all
    seats taken just before student ``i + 1`` picks; the last entry is the
    state after the final student.
    """

    ranks: list[Rank]
    matched: list[bool]
    taken_trajectory: list[int]
    seat_histogram_final: list[int]
    # 1-based index of the student who filled school 0, or None
    school0_filled_by: int | None = field(default=None)


# -- single realization -------------------------------------------------------

def _weighted_draw(cdf: list[float], drawn: list[int], stream: np.random.Generator,
                   weights: np.ndarray) -> int:
    total = cdf[-1]
    n = len(cdf)
    for _ in range(_MAX_REJECTION_ROUNDS):
        s = min(bisect.bisect_right(cdf, stream.random() * total), n - 1)
        if s not in drawn and weights[s] > 0:
            return s
    # heavily concentrated weights: renormalize over what is left
    w = np.array(weights, dtype=float)
    w[drawn] = 0.0
    return int(stream.choice(n, p=w / w.sum()))


def run_market(config: MarketConfig, stream: np.random.Generator) -> SimOutcome:
    """Play one realization of the market with ``config.m`` students."""
    n, d, q, m = config.n, config.d, config.q, config.m
    uniform = config.dist.is_uniform
    if not uniform:
        weights = config.dist.weights
        cdf = np.cumsum(weights).tolist()

    seats = [0] * n
    perm = list(range(n))
    ranks: list[Rank] = []
    matched: list[bool] = []
    taken = 0
    trajectory = [0]
    filled_by = None

    for student in range(1, m + 1):
        rank: Rank = UNMATCHED
        if uniform:
            # partial Fisher-Yates; swaps are undone afterwards so the
            # index array is back to identity for the next student
            swaps = []
            for j in range(d):
                r = j + int(stream.integers(n - j))
                perm[j], perm[r] = perm[r], perm[j]
                swaps.append(r)
                school = perm[j]
                if seats[school] < q:
                    rank = j + 1
                    break
            for j in range(len(swaps) - 1, -1, -1):
                r = swaps[j]
                perm[j], perm[r] = perm[r], perm[j]
        else:
            drawn: list[int] = []
            for j in range(d):
                school = _weighted_draw(cdf, drawn, stream, weights)
                drawn.append(school)
                if seats[school] < q:
                    rank = j + 1
                    break

        if rank is UNMATCHED:
            matched.append(False)
        else:
            matched.append(True)
            seats[school] += 1
            if seats[school] == q:
                taken += 1
                if school == 0:
                    filled_by = student
        ranks.append(rank)
        trajectory.append(taken)

    hist = [0] * (q + 1)
    for s in seats:
        hist[s] += 1
    return SimOutcome(ranks, matched, trajectory, hist, filled_by)


def scan_list(draws, seat_counts, q: int, d: int) -> Rank:
    """Rank obtained by scanning the first ``d`` entries of ``draws``.

    This is the per-student step of the mechanism with the draw sequence
    supplied explicitly, so that runs with different ``d`` can share it.
    """
    for j, school in enumerate(draws[:d]):
        if seat_counts[school] < q:
            return j + 1
    return UNMATCHED


# -- many realizations at once ------------------------------------------------

@dataclass
class BatchOutcome:
    """Stacked realizations; row ``r`` is replication ``r``.

    ``ranks`` uses 0 for unmatched (the array is numeric); it is an
    internal buffer, :meth:`outcome` converts a row to a :class:`SimOutcome`.
    """

    ranks: np.ndarray            # (reps, m) int8
    taken: np.ndarray            # (reps, m + 1) int32
    seat_histogram: np.ndarray   # (reps, q + 1) int32
    school0_filled_by: np.ndarray  # (reps,) int32, m + 1 if never filled
    school0_seats: np.ndarray      # (reps,) seats of school 0 taken at the end

    @property
    def reps(self) -> int:
        return self.ranks.shape[0]

    def outcome(self, r: int) -> SimOutcome:
        m = self.ranks.shape[1]
        ranks = [int(k) if k > 0 else UNMATCHED for k in self.ranks[r]]
        filled = int(self.school0_filled_by[r])
        return SimOutcome(
            ranks=ranks,
            matched=[k is not UNMATCHED for k in ranks],
            taken_trajectory=self.taken[r].tolist(),
            seat_histogram_final=self.seat_histogram[r].tolist(),
            school0_filled_by=None if filled > m else filled,
        )


def _uniform_pick(rng, n: int, j: int, prior: np.ndarray) -> np.ndarray:
    # uniform over the n - j schools not yet on each row's list: draw a
    # rank among the survivors, then step over earlier draws in sorted order
    pick = rng.integers(0, n - j, size=prior.shape[0])
    if j:
        prior = np.sort(prior, axis=1)
        for c in range(j):
            pick += pick >= prior[:, c]
    return pick


class AliasTable:
    """Walker/Vose alias table: O(1) draws from a fixed discrete law."""

    def __init__(self, weights: np.ndarray):
        w = np.asarray(weights, dtype=float)
        n = w.size
        scaled = w * (n / w.sum())
        prob = np.zeros(n)
        alias = np.zeros(n, dtype=np.int64)
        small = [j for j in range(n) if scaled[j] < 1.0]
        large = [j for j in range(n) if scaled[j] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            prob[s], alias[s] = scaled[s], g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        best = int(np.argmax(w))
        for j in large + small:
            # leftovers are rounding residue; never let a zero-weight school through
            prob[j], alias[j] = (1.0, j) if w[j] > 0 else (0.0, best)
        self.prob, self.alias = prob, alias

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, self.prob.size, size=size)
        return np.where(rng.random(size) < self.prob[idx], idx, self.alias[idx])


def _weighted_pick(rng, table: AliasTable, weights: np.ndarray, rows: np.ndarray,
                   on_list: np.ndarray) -> np.ndarray:
    # successive weighted draws without replacement: redraw any school the
    # row already holds, which leaves the renormalized law of the rest
    pick = table.sample(rng, rows.size)
    todo = np.flatnonzero(on_list[rows, pick])
    rounds = 0
    while todo.size and rounds < _MAX_REJECTION_ROUNDS:
        fresh = table.sample(rng, todo.size)
        pick[todo] = fresh
        todo = todo[on_list[rows[todo], fresh]]
        rounds += 1
    for t in todo:
        w = np.where(on_list[rows[t]], 0.0, weights)
        pick[t] = rng.choice(weights.size, p=w / w.sum())
    return pick


def simulate_batch(config: MarketConfig, reps: int, rng: np.random.Generator) -> BatchOutcome:
    """Play ``reps`` independent realizations of ``config`` in lockstep."""
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    n, d, q, m = config.n, config.d, config.q, config.m
    uniform = config.dist.is_uniform
    weights = config.dist.weights
    if not uniform:
        table = AliasTable(weights)
        on_list = np.zeros((reps, n), dtype=bool)

    seat_dtype = np.int8 if q < 127 else np.int32
    seats = np.zeros((reps, n), dtype=seat_dtype)
    ranks = np.zeros((reps, m), dtype=np.int8 if d < 127 else np.int16)
    taken = np.zeros((reps, m + 1), dtype=np.int32)
    filled_by = np.full(reps, m + 1, dtype=np.int32)
    drawn = np.empty((reps, d), dtype=np.int64) if uniform else None
    count = np.zeros(reps, dtype=np.int32)
    everyone = np.arange(reps)

    for s in range(m):
        active = everyone
        marked = []
        for j in range(d):
            if uniform:
                pick = _uniform_pick(rng, n, j, drawn[active, :j])
                drawn[active, j] = pick
            else:
                pick = _weighted_pick(rng, table, weights, active, on_list)
                if j + 1 < d:
                    on_list[active, pick] = True
                    marked.append((active, pick))
            free = seats[active, pick] < q
            hit, school = active[free], pick[free]
            if hit.size:
                seats[hit, school] += 1
                ranks[hit, s] = j + 1
                full = seats[hit, school] == q
                count[hit[full]] += 1
                first = hit[full & (school == 0)]
                filled_by[first] = s + 1
            active = active[~free]
            if active.size == 0:
                break
        for rows, picked in marked:
            on_list[rows, picked] = False
        taken[:, s + 1] = count

    hist = np.stack([(seats == k).sum(axis=1) for k in range(q + 1)], axis=1).astype(np.int32)
    return BatchOutcome(ranks, taken, hist, filled_by, seats[:, 0].astype(np.int32))


# -- closed-form conditional probabilities -----------------------------------

def _check_ndk(n: int, d: int, k: int) -> None:
    if not 1 <= d <= n:
        raise DomainError(f"need 1 <= d <= n, got n={n}, d={d}")
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")


def _all_taken_prob(n: int, d: int, k: int, exact: bool):
    # C(k, d) / C(n, d) as a falling-factorial ratio
    one = Fraction(1) if exact else 1.0
    p = one
    for j in range(d):
        if k - j <= 0:
            return 0 * one
        p *= Fraction(k - j, n - j) if exact else (k - j) / (n - j)
    return p


def match_prob_exact(n: int, d: int, k: int, exact: bool = False):
    """P(student matched | k of n schools taken) for a uniform list of length d.

    With ``exact=True`` the result is a :class:`~fractions.Fraction`.
    """
    _check_ndk(n, d, k)
    return 1 - _all_taken_prob(n, d, k, exact)


def match_prob_approx(n: int, d: int, k: int) -> float:
    """Sampling-with-replacement approximation ``1 - (k/n)**d``."""
    _check_ndk(n, d, k)
    return 1.0 - (k / n) ** d


def rank_prob_given_taken(n: int, d: int, k: int, r: int, exact: bool = False):
    """P(matched at list position r | k schools taken), uniform lists."""
    _check_ndk(n, d, k)
    if not 1 <= r <= d:
        raise DomainError(f"need 1 <= r <= d, got r={r}, d={d}")
    # first r - 1 draws hit taken schools, draw r hits a free one
    p = _all_taken_prob(n, r - 1, k, exact) if r > 1 else (Fraction(1) if exact else 1.0)
    if exact:
        return p * Fraction(n - k, n - (r - 1))
    return p * (n - k) / (n - (r - 1))
