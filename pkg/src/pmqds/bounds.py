"""Finite-size concentration bounds.

Two Chernoff-type conversions between an observed count and its expected
value, and an upper bound on the errors left in the unsampled part of a
population after uniform sampling without replacement.
"""

from __future__ import annotations

import math
from typing import Protocol


def _beta(eps_1: float) -> float:
    if not 0 < eps_1 < 1:
        raise ValueError(f"eps_1={eps_1} outside (0, 1)")
    return math.log(1.0 / eps_1)


def chernoff_upper(x: float, eps_1: float) -> float:
    """Upper bound on the expected value of a count observed as ``x``."""
    if x < 0:
        raise ValueError("observed count must be non-negative")
    b = _beta(eps_1)
    return x + b + math.sqrt(2 * b * x + b * b)


def chernoff_lower(x: float, eps_1: float) -> float:
    """Lower bound on the expected value of a count observed as ``x``, clamped at 0."""
    if x < 0:
        raise ValueError("observed count must be non-negative")
    b = _beta(eps_1)
    return max(0.0, x - b / 2 - math.sqrt(2 * b * x + b * b / 4))


class ChernoffCounter:
    """Applies the Chernoff conversions and counts how many were used."""

    def __init__(self, eps_1: float, limit: int | None = None):
        self.eps_1 = eps_1
        self.limit = limit
        self.used = 0

    def _tick(self):
        self.used += 1
        if self.limit is not None and self.used > self.limit:
            raise RuntimeError(f"more than {self.limit} Chernoff conversions in one evaluation")

    def upper(self, x: float) -> float:
        self._tick()
        return chernoff_upper(x, self.eps_1)

    def lower(self, x: float) -> float:
        self._tick()
        return chernoff_lower(x, self.eps_1)


class SamplingBound(Protocol):
    def __call__(self, observed_errors: float, sample_size: float, population_size: float,
                 eps_2: float) -> float: ...


def serfling_bound(observed_errors: float, sample_size: float, population_size: float,
                   eps_2: float) -> float:
    """Serfling-type tail bound on the errors in the ``population - sample`` unsampled items.

    With ``k`` sampled and ``n`` left, the error rate of the remainder exceeds
    the sample rate by more than
    ``g = sqrt((n + k)(k + 1) ln(1/eps_2) / (2 n k^2))``
    with probability at most ``eps_2``.
    """
    if not 0 <= observed_errors <= sample_size <= population_size:
        raise ValueError(
            f"need 0 <= errors <= sample <= population, got {observed_errors}, {sample_size}, {population_size}")
    if not 0 < eps_2 < 1:
        raise ValueError(f"eps_2={eps_2} outside (0, 1)")
    k = float(sample_size)
    n = float(population_size) - k
    if n <= 0:
        return 0.0
    if k <= 0:
        return n
    g = math.sqrt((n + k) * (k + 1) * math.log(1 / eps_2) / (2 * n * k * k))
    return min(n, n * (observed_errors / k + g))


DEFAULT_SAMPLING_BOUND: SamplingBound = serfling_bound


def rswr_upper_bound(observed_errors: float, sample_size: float, population_size: float,
                     eps_2: float, strategy: SamplingBound | None = None) -> float:
    """Upper bound on errors in the unsampled remainder, valid with probability >= 1 - eps_2."""
    return (strategy or DEFAULT_SAMPLING_BOUND)(observed_errors, sample_size, population_size, eps_2)
