import numpy as np
import pytest

from standa.experiments import gen_synthetic, make_random_bundle


@pytest.fixture(scope="session")
def small_bundle():
    """The 10->8->4 / 4->2->4 bundle used across integration tests."""
    return make_random_bundle((10, 8, 4), (4, 2, 4), seed=5)


@pytest.fixture(scope="session")
def tiny_bundle():
    return make_random_bundle((4, 3, 2), (2, 2, 2), seed=9)


def first_tested_instance(bundle, n_s, n_t, d, seed_tag, max_tries=40):
    """First seeded null draw whose detector flags at least one target row.

    Returns (data, cov, detection) — a deterministic fixture generator for
    tests that need a detected anomaly to work with.
    """
    from standa.network import detect

    for t in range(max_tries):
        data, cov, _, _ = gen_synthetic(n_s, n_t, d, 0.0, 0.0, [seed_tag, t])
        det = detect(bundle, data, 0.05)
        if det.target_anomalies.size:
            return data, cov, det
    raise RuntimeError("no draw produced a target anomaly; widen max_tries")
