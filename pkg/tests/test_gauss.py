"""Truncated-Gaussian tail arithmetic against a 50-digit mpmath oracle."""

import math

import mpmath
import numpy as np
import pytest
from scipy.special import log_ndtr

from standa.gauss import (
    RegionMassError,
    log1mexp,
    log_interval_mass,
    log_naive_two_sided,
    logsubexp,
    truncated_two_sided_p,
)
mpmath.mp.dps = 50


def _phi_mass(lo, hi):
    """P(lo <= Z <= hi) for standard normal Z, 50-digit precision."""
    cdf = lambda x: mpmath.mpf(1) / 2 * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2)))
    lo = mpmath.mpf("-inf") if lo == -math.inf else lo
    hi = mpmath.mpf("+inf") if hi == math.inf else hi
    return cdf(hi) - cdf(lo)


def oracle_p(z_obs, regions, sigma):
    """Two-sided truncated tail probability, computed independently in mpmath."""
    z = abs(mpmath.mpf(z_obs)) / sigma
    num = mpmath.mpf(0)
    den = mpmath.mpf(0)
    for lo, hi in regions:
        lo, hi = mpmath.mpf(lo) / sigma, mpmath.mpf(hi) / sigma
        den += _phi_mass(lo, hi)
        num += _phi_mass(max(lo, z), max(hi, z))  # right tail piece
        num += _phi_mass(min(lo, -z), min(hi, -z))  # left tail piece
    return float(num / den)


def test_log1mexp_matches_mpmath():
    for x in [-1e-12, -1e-6, -0.1, -math.log(2), -1.0, -5.0, -50.0, -700.0]:
        want = float(mpmath.log(1 - mpmath.exp(x)))
        assert log1mexp(x) == pytest.approx(want, rel=1e-13)


def test_log1mexp_domain():
    with pytest.raises(ValueError):
        log1mexp(0.5)


def test_logsubexp():
    assert logsubexp(math.log(5.0), math.log(3.0)) == pytest.approx(math.log(2.0))
    assert logsubexp(1.0, 1.0) == -math.inf
    # a < b clamps to -inf (zero mass) instead of going complex
    assert logsubexp(0.0, 1.0) == -math.inf


@pytest.mark.parametrize(
    "lo,hi",
    [
        (-1.0, 1.0),
        (0.5, 2.0),
        (-2.0, -0.5),
        (5.0, 7.0),  # deep right tail, complementary branch
        (-7.0, -5.0),  # deep left tail
        (-12.0, -11.5),
        (11.5, 12.0),
        (-math.inf, 0.0),
        (1.0, math.inf),
        (-math.inf, math.inf),
    ],
)
def test_log_interval_mass_vs_oracle(lo, hi):
    want = float(mpmath.log(_phi_mass(lo, hi)))
    assert log_interval_mass(lo, hi) == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_interval_mass_empty():
    assert log_interval_mass(1.0, 1.0) == -math.inf
    assert log_interval_mass(2.0, 1.0) == -math.inf


def test_symmetric_tails_agree():
    # the straddling branch must not lose symmetry to cancellation
    for a in [0.1, 1.0, 3.0, 8.0]:
        left = log_interval_mass(-a - 1.0, -a)
        right = log_interval_mass(a, a + 1.0)
        assert left == pytest.approx(right, rel=1e-14)


def test_two_sided_basic_values():
    # untruncated: p(0) = 1, p(1.96) ~ 0.05
    full = np.array([[-np.inf, np.inf]])
    assert truncated_two_sided_p(0.0, full, 1.0) == pytest.approx(1.0)
    assert truncated_two_sided_p(1.959963984540054, full, 1.0) == pytest.approx(
        0.05, abs=1e-12
    )


def test_two_sided_half_line():
    # region [0, inf), z = 1: numerator collapses to the right tail
    p = truncated_two_sided_p(1.0, np.array([[0.0, np.inf]]), 1.0)
    want = float(_phi_mass(1.0, math.inf) / _phi_mass(0.0, math.inf))
    assert p == pytest.approx(want, rel=1e-13)
    assert p == pytest.approx(0.317310507862914, abs=1e-9)


def test_two_sided_scale_equivariance():
    regions = np.array([[-0.5, 0.3], [0.9, 2.4]])
    p1 = truncated_two_sided_p(1.1, regions, 1.0)
    c = 37.5
    p2 = truncated_two_sided_p(c * 1.1, c * regions, c)
    assert p1 == pytest.approx(p2, rel=1e-12)


def test_two_sided_randomized_oracle():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(250):
        sigma = float(rng.uniform(0.2, 5.0))
        k = int(rng.integers(1, 4))
        pts = np.sort(rng.uniform(-6, 6, 2 * k)) * sigma
        regions = pts.reshape(k, 2)
        pick = rng.integers(0, k)
        z = float(rng.uniform(regions[pick, 0], regions[pick, 1]))
        p = truncated_two_sided_p(z, regions, sigma)
        want = oracle_p(z, regions.tolist(), sigma)
        if want > 0:
            worst = max(worst, abs(p - want) / want)
    assert worst < 1e-8, f"worst relative error {worst:.3e}"


def test_two_sided_deep_tail_regions():
    # single windows out at ~10 sigma: log-space arithmetic must survive
    for z0 in [8.0, 9.5, 10.0]:
        regions = np.array([[z0 - 0.2, z0 + 0.2]])
        z = z0 + 0.1
        p = truncated_two_sided_p(z, regions, 1.0)
        want = oracle_p(z, regions.tolist(), 1.0)
        assert p == pytest.approx(want, rel=1e-8)


def test_region_mass_underflow_raises():
    with pytest.raises(RegionMassError):
        truncated_two_sided_p(40.2, np.array([[40.0, 40.5]]), 1.0)


def test_naive_two_sided():
    assert math.exp(log_naive_two_sided(0.0, 1.0)) == pytest.approx(1.0)
    want = 2 * math.exp(log_ndtr(-1.959963984540054))
    assert math.exp(log_naive_two_sided(1.959963984540054, 1.0)) == pytest.approx(want)
    # scale invariance
    assert log_naive_two_sided(3.0, 2.0) == pytest.approx(log_naive_two_sided(1.5, 1.0))
