"""Replicated simulation with standard errors.

Replications are grouped into blocks whose size depends only on the market
shape. Block ``b`` draws from a generator seeded by mixing the master seed
with ``b``, and block results are folded in block order, so estimates are
bit-identical for any number of worker threads.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import continuum
from .errors import ConfigError, ConsistencyError
from .market import BatchOutcome, MarketConfig, simulate_batch
from .seeding import substream

log = logging.getLogger(__name__)

_BLOCK_CELLS = 1 << 22
_MIN_BLOCK, _MAX_BLOCK = 64, 65536
SIGMAS = 3.0


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    reps: int

    def contains(self, value: float, sigmas: float = SIGMAS, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr + slack

    def __format__(self, spec):
        return f"{self.mean:{spec}} +/- {self.stderr:{spec}} (n={self.reps})"


@dataclass(frozen=True, eq=False)
class TrajectoryEstimate:
    t_grid: np.ndarray
    mean_fraction: np.ndarray
    stderr_fraction: np.ndarray
    continuum: np.ndarray
    # per replication: sup over the grid of |T/n - x(t)|
    sup_deviation_samples: np.ndarray
    # per grid point: mean over replications of |T/n - x(t)|
    mean_abs_deviation: np.ndarray
    reps: int


def block_size(config: MarketConfig) -> int:
    return int(np.clip(_BLOCK_CELLS // (config.n + config.m + 1), _MIN_BLOCK, _MAX_BLOCK))


def _block_plan(config: MarketConfig, reps: int) -> list[int]:
    size = block_size(config)
    full, rest = divmod(reps, size)
    return [size] * full + ([rest] if rest else [])


def run_replications(config: MarketConfig, reps: int,
                     columns: Callable[[BatchOutcome], np.ndarray],
                     threads: int = 1, keep_samples: bool = False):
    """Fold per-replication columns over ``reps`` replications.

    ``columns`` maps a batch to a (batch reps, Q) float array. Returns
    ``(sums, sumsq, samples)``; ``samples`` stacks every row in replication
    order when ``keep_samples`` is set, else is None.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    plan = _block_plan(config, reps)

    def work(b: int) -> np.ndarray:
        batch = simulate_batch(config, plan[b], substream(config.seed, b))
        return np.asarray(columns(batch), dtype=float)

    sums = sumsq = None
    kept = []
    if threads > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
        results = pool.map(work, range(len(plan)))
    else:
        pool = None
        results = map(work, range(len(plan)))
    try:
        for cols in results:
            s, s2 = cols.sum(axis=0), (cols * cols).sum(axis=0)
            sums = s if sums is None else sums + s
            sumsq = s2 if sumsq is None else sumsq + s2
            if keep_samples:
                kept.append(cols)
    finally:
        if pool is not None:
            pool.shutdown()
    samples = np.concatenate(kept) if keep_samples else None
    return sums, sumsq, samples


def _estimates(sums, sumsq, reps: int) -> list[Estimate]:
    out = []
    for s, s2 in zip(np.atleast_1d(sums), np.atleast_1d(sumsq)):
        mean = s / reps
        if reps > 1:
            var = max(0.0, (s2 - s * mean) / (reps - 1))
            se = math.sqrt(var / reps)
        else:
            se = 0.0
        out.append(Estimate(float(mean), se, reps))
    return out


def _check_indices(config: MarketConfig, indices: Sequence[int], upper: int | None = None) -> list[int]:
    upper = config.m if upper is None else upper
    idx = [int(i) for i in indices]
    bad = [i for i in idx if not 1 <= i <= upper]
    if bad:
        raise ConfigError(f"student indices {bad} outside 1..{upper}")
    return idx


def estimate_match_prob(config: MarketConfig, student_indices: Sequence[int], reps: int,
                        threads: int = 1) -> list[Estimate]:
    """P(M_i = 1) for each requested student, in the order given."""
    cols = np.array(_check_indices(config, student_indices)) - 1
    sums, sumsq, _ = run_replications(
        config, reps, lambda b: b.ranks[:, cols] > 0, threads)
    return _estimates(sums, sumsq, reps)


def estimate_rank_cdf(config: MarketConfig, i: int, k: int, reps: int, threads: int = 1) -> Estimate:
    """P(K_i <= k): student ``i`` gets one of their top ``k`` schools."""
    (i,) = _check_indices(config, [i])
    if not 1 <= k <= config.d:
        raise ConfigError(f"k must satisfy 1 <= k <= d={config.d}")

    def cols(b):
        r = b.ranks[:, i - 1]
        return ((r > 0) & (r <= k))[:, None]

    sums, sumsq, _ = run_replications(config, reps, cols, threads)
    return _estimates(sums, sumsq, reps)[0]


@dataclass(frozen=True)
class StudentRow:
    i: int
    match: Estimate
    rank_cdf: Estimate
    taken_mean: Estimate


def estimate_students(config: MarketConfig, student_indices: Sequence[int], k: int, reps: int,
                      threads: int = 1) -> list[StudentRow]:
    """Match probability, P(K_i <= k) and E[T_i] for many students in one pass."""
    idx = _check_indices(config, student_indices)
    if not 1 <= k <= config.d:
        raise ConfigError(f"k must satisfy 1 <= k <= d={config.d}")
    cols = np.array(idx) - 1

    def columns(b):
        r = b.ranks[:, cols]
        return np.hstack([r > 0, (r > 0) & (r <= k), b.taken[:, cols]])

    sums, sumsq, _ = run_replications(config, reps, columns, threads)
    est = _estimates(sums, sumsq, reps)
    w = len(idx)
    return [StudentRow(i, est[j], est[w + j], est[2 * w + j]) for j, i in enumerate(idx)]


def continuum_fraction(config: MarketConfig, t_grid: np.ndarray) -> np.ndarray:
    """Continuum fraction of full schools on ``t_grid`` for this market's d, q."""
    t_max = float(t_grid[-1])
    if t_max == 0:
        return np.zeros_like(t_grid)
    if config.q == 1:
        sol = continuum.solve_ivp(config.d, t_max, validate=False)
    else:
        sol = continuum.tau_rescaled_solve(config.d, config.q, t_max)
    return sol.at(t_grid)


def estimate_trajectory(config: MarketConfig, t_max: float, grid_points: int, reps: int,
                        threads: int = 1) -> TrajectoryEstimate:
    """Fraction of full schools after the first floor(t n) students.

    Time is measured in students per school, matching the continuum clock.
    """
    if t_max < 0 or grid_points < 1:
        raise ConfigError("need t_max >= 0 and grid_points >= 1")
    n = config.n
    if config.m < math.ceil(t_max * n):
        raise ConfigError(f"m={config.m} students do not reach t_max={t_max} (need {math.ceil(t_max * n)})")
    t_grid = np.linspace(0.0, t_max, grid_points) if grid_points > 1 else np.array([t_max])
    if grid_points > 1 and t_grid[1] - t_grid[0] > 1.0 / n + 1e-15:
        warnings.warn("grid coarser than 1/n; the sup deviation will be under-estimated",
                      RuntimeWarning, stacklevel=2)
    steps = np.minimum(np.floor(t_grid * n + 1e-9).astype(int), config.m)
    x = continuum_fraction(config, t_grid)
    g = t_grid.size

    def columns(b):
        frac = b.taken[:, steps] / n
        dev = np.abs(frac - x)
        return np.hstack([frac, dev, dev.max(axis=1, keepdims=True)])

    sums, sumsq, samples = run_replications(config, reps, columns, threads, keep_samples=True)
    est = _estimates(sums, sumsq, reps)
    return TrajectoryEstimate(
        t_grid=t_grid,
        mean_fraction=np.array([e.mean for e in est[:g]]),
        stderr_fraction=np.array([e.stderr for e in est[:g]]),
        continuum=x,
        sup_deviation_samples=samples[:, -1].copy(),
        mean_abs_deviation=np.array([e.mean for e in est[g:2 * g]]),
        reps=reps,
    )


def estimate_rsd(config: MarketConfig, reps: int, threads: int = 1,
                 sigmas: float = SIGMAS) -> Estimate:
    """Match probability of a student at a uniformly random position.

    Direct estimator: the fraction of the ``m`` students who are matched.
    Under uniform lists it is cross-checked against ``(n/m) E[seats of
    school 0]``, which holds by symmetry between schools.
    """
    n, m = config.n, config.m

    def columns(b):
        direct = (b.ranks > 0).sum(axis=1) / m
        via_school = b.school0_seats * (n / m)
        return np.stack([direct, via_school, direct - via_school], axis=1)

    sums, sumsq, _ = run_replications(config, reps, columns, threads)
    direct, via_school, diff = _estimates(sums, sumsq, reps)
    if config.dist.is_uniform and abs(diff.mean) > sigmas * diff.stderr + 1e-12:
        raise ConsistencyError(
            f"random-order match rate {direct.mean:.6g} disagrees with the school-side "
            f"identity {via_school.mean:.6g} (paired stderr {diff.stderr:.3g})"
        )
    return direct


def estimate_school_match_prob(config: MarketConfig, i: int, reps: int, threads: int = 1,
                               sigmas: float = SIGMAS, check: bool = True) -> Estimate:
    """P(school 0 is full just before student ``i`` picks).

    Under uniform lists this equals E[T_i] / n; the two are compared on
    paired replications and a :class:`ConsistencyError` is raised if they
    differ by more than ``sigmas`` standard errors.
    """
    (i,) = _check_indices(config, [i], upper=config.m + 1)
    n = config.n

    def columns(b):
        filled = (b.school0_filled_by < i).astype(float)
        frac = b.taken[:, i - 1] / n
        return np.stack([filled, frac, filled - frac], axis=1)

    sums, sumsq, _ = run_replications(config, reps, columns, threads)
    filled, _, diff = _estimates(sums, sumsq, reps)
    if check and config.dist.is_uniform and abs(diff.mean) > sigmas * diff.stderr + 1e-12:
        raise ConsistencyError(
            f"school-side estimate {filled.mean:.6g} disagrees with E[T_i]/n "
            f"(difference {diff.mean:.3g}, stderr {diff.stderr:.3g})"
        )
    return filled
