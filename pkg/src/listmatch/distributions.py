"""School-sampling laws.

Each law is materialized as a weight vector over the ``n`` schools. School
``j`` in the formulas below is 1-based, as in the usual write-up of the
experiment (schools ``1..n``), and maps to array index ``j - 1``.

The four non-uniform laws were originally stated for ``n = 1000``; for other
``n`` the class threshold and the degenerate split scale with ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


class DistKind(str, Enum):
    UNIFORM = "uniform"
    PARETO_LOW = "pareto-low"
    PARETO_HIGH = "pareto-high"
    TWO_CLASS = "two-class"
    DEGENERATE = "degenerate"
    CUSTOM = "custom"


#: the five laws of the non-uniform experiment, in panel order
STANDARD_KINDS = (
    DistKind.UNIFORM,
    DistKind.PARETO_LOW,
    DistKind.PARETO_HIGH,
    DistKind.TWO_CLASS,
    DistKind.DEGENERATE,
)


def _raw_weights(kind: DistKind, n: int) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=float)
    if kind is DistKind.UNIFORM:
        return np.full(n, 1.0 / n)
    if kind is DistKind.PARETO_LOW:
        return 1.0 / (2.0 + j / n)
    if kind is DistKind.PARETO_HIGH:
        return 1.0 / (1.0 + j / n) ** 10
    if kind is DistKind.TWO_CLASS:
        cut = math.ceil(n / 5)
        return 1.0 + 3.0 * (j <= cut)
    if kind is DistKind.DEGENERATE:
        # tail schools get 1/(100 n) each, the head shares the rest;
        # at n = 1000 the head weight is 2/n - 1/(100 n)
        half = math.ceil(n / 2)
        tail = 1.0 / (100.0 * n)
        head = (1.0 - (n - half) * tail) / half
        return np.where(j <= half, head, tail)
    raise ConfigError(f"no built-in weights for {kind.value!r}")


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    kind: DistKind
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ConfigError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {w.sum():.17g}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def make(cls, kind: DistKind | str, n: int) -> "DistributionSpec":
        kind = DistKind(kind)
        if n < 1:
            raise ConfigError("n must be positive")
        if kind is DistKind.CUSTOM:
            raise ConfigError("custom laws need explicit weights; use DistributionSpec.custom")
        w = _raw_weights(kind, n)
        if kind is DistKind.UNIFORM:
            return cls(kind, w)
        return cls(kind, w / w.sum())

    @classmethod
    def custom(cls, weights) -> "DistributionSpec":
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("custom weights must be a nonnegative, nonzero vector")
        return cls(DistKind.CUSTOM, w / w.sum())

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def is_uniform(self) -> bool:
        return self.kind is DistKind.UNIFORM

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))
