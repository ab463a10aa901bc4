"""Monte Carlo coverage suites for the concentration bounds, shared with the acceptance run."""

import numpy as np

from pmqds.bounds import chernoff_lower, chernoff_upper, rswr_upper_bound

TRIALS = 10**5


def chernoff_violation_rates(mean: float, eps: float, trials: int = TRIALS, seed: int = 0):
    """Fractions of Poisson draws whose upper (lower) bound misses the true mean."""
    rng = np.random.default_rng(seed)
    draws = rng.poisson(mean, trials)
    uniq, inv = np.unique(draws, return_inverse=True)
    up = np.array([chernoff_upper(float(x), eps) for x in uniq])[inv]
    lo = np.array([chernoff_lower(float(x), eps) for x in uniq])[inv]
    return float(np.mean(up < mean)), float(np.mean(lo > mean))


def rswr_violation_rate(population: int, errors: int, sample: int, eps: float,
                        trials: int = TRIALS, seed: int = 0) -> float:
    """Fraction of uniform samples after which the remainder holds more errors than bounded."""
    rng = np.random.default_rng(seed)
    seen = rng.hypergeometric(errors, population - errors, sample, trials)
    uniq, inv = np.unique(seen, return_inverse=True)
    bound = np.array([rswr_upper_bound(float(x), sample, population, eps) for x in uniq])[inv]
    return float(np.mean(errors - seen > bound))


CHERNOFF_CASES = [(mean, eps) for mean in (0.5, 5.0, 50.0, 2000.0) for eps in (0.2, 0.05, 1e-3)]
RSWR_CASES = [
    (2000, 100, 400, 0.2),
    (2000, 100, 400, 0.05),
    (10**5, 1500, 10**4, 0.1),
    (10**5, 1500, 10**4, 1e-3),
    (500, 250, 50, 0.1),
]
