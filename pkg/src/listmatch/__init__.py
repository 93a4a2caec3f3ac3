"""Serial Dictatorship with short random preference lists, and its continuum limit."""

__version__ = "0.1.0"

from .distributions import DistKind, DistributionSpec
from .errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    ListMatchError,
    NotFoundError,
    SizeGuardError,
    SolverError,
)
from .market import (
    UNMATCHED,
    MarketConfig,
    SimOutcome,
    match_prob_approx,
    match_prob_exact,
    rank_prob_given_taken,
    run_market,
    simulate_batch,
)
from .montecarlo import Estimate, TrajectoryEstimate
from .report import Status, VerificationReport
