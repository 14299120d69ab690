"""Log-space Gaussian tail and interval-mass computations.

Everything here works on a standard normal; callers standardize by the
statistic's standard deviation first. All masses are carried as logs so that
events ten or more sigma out stay representable, and interval masses are
evaluated from whichever tail avoids catastrophic cancellation:

- both endpoints in the left tail: difference of lower CDFs,
- both in the right tail: difference of upper (complementary) CDFs,
- straddling zero: a sum of two same-sign erf terms, which cannot cancel.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, log_ndtr
from scipy.special import logsumexp as _logsumexp

#: Smallest log feasible-region mass we are willing to divide by.
LOG_MASS_FLOOR = math.log(1e-300)

_SQRT2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)


class RegionMassError(ArithmeticError):
    """Feasible-region probability mass too small to normalize against."""


def log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, switching forms at -log 2 for accuracy."""
    if x > 0.0:
        raise ValueError(f"log1mexp needs x <= 0, got {x}")
    if x == 0.0:
        return -math.inf
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def logsubexp(a: float, b: float) -> float:
    """log(exp(a) - exp(b)) for a >= b; returns -inf when they coincide."""
    if a == -math.inf or a <= b:
        return -math.inf
    if b == -math.inf:
        return a
    return a + log1mexp(b - a)


def log_interval_mass(lo: float, hi: float) -> float:
    """Log of P(lo <= Z <= hi) for standard normal Z."""
    if not hi > lo:
        return -math.inf
    if hi <= 0.0:
        return logsubexp(log_ndtr(hi), log_ndtr(lo))
    if lo >= 0.0:
        return logsubexp(log_ndtr(-lo), log_ndtr(-hi))
    # Endpoints straddle zero: erf(hi/sqrt2) >= 0 >= erf(lo/sqrt2), so the
    # difference is a sum of magnitudes and loses no precision.
    mass = erf(hi / _SQRT2) - erf(lo / _SQRT2)
    return _LOG_HALF + math.log(mass)


def log_region_mass(regions: np.ndarray) -> float:
    """Log total mass of a union of disjoint intervals, rows [lo, hi]."""
    regions = np.asarray(regions, dtype=np.float64).reshape(-1, 2)
    if regions.shape[0] == 0:
        return -math.inf
    parts = [log_interval_mass(lo, hi) for lo, hi in regions]
    return float(_logsumexp(parts))


def log_truncated_two_sided(z_obs: float, regions: np.ndarray) -> float:
    """Log of P(|Z| >= |z_obs|, Z in regions) / P(Z in regions).

    ``regions`` holds standardized [lo, hi] rows. Raises
    :class:`RegionMassError` when the denominator mass underflows the floor.
    """
    regions = np.asarray(regions, dtype=np.float64).reshape(-1, 2)
    log_den = log_region_mass(regions)
    if log_den < LOG_MASS_FLOOR:
        raise RegionMassError(
            f"log region mass {log_den:.2f} below floor {LOG_MASS_FLOOR:.2f}"
        )
    a = abs(z_obs)
    parts: list[float] = []
    for lo, hi in regions:
        left = log_interval_mass(lo, min(hi, -a))
        right = log_interval_mass(max(lo, a), hi)
        if left > -math.inf:
            parts.append(left)
        if right > -math.inf:
            parts.append(right)
    if not parts:
        return -math.inf
    log_num = float(_logsumexp(parts))
    # Round-off can push the numerator a hair past the denominator.
    return min(0.0, log_num - log_den)


def truncated_two_sided_p(z_obs: float, regions: np.ndarray, sigma: float) -> float:
    """Two-sided truncated-normal p-value for Z ~ N(0, sigma^2) on a union.

    Both the observation and the region endpoints are divided by ``sigma``
    before the standard-normal computation.
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    regions = np.asarray(regions, dtype=np.float64).reshape(-1, 2)
    return math.exp(log_truncated_two_sided(z_obs / sigma, regions / sigma))


def log_naive_two_sided(z_obs: float, sigma: float) -> float:
    """Log of the unconditional two-sided p-value 2 P(Z >= |z_obs|)."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return min(0.0, math.log(2.0) + float(log_ndtr(-abs(z_obs) / sigma)))
