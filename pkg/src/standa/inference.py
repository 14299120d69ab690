"""Selective inference for detected anomalies, end to end.

For each detected target anomaly j the pipeline is:

1. build the test direction eta_j (row j against the mean of the undetected
   target rows, weighted by the observed subtraction signs) — the statistic
   is T_j = eta_j . vec(X);
2. condition on the nuisance component, reducing the data to the line
   a + b z with eta . b = 1, so T_j(z) = z;
3. scan the line window by window: each window is the intersection of the
   network's activation-pattern interval with the detector-event interval,
   and a window joins the truncation region when replaying the detector on
   it reproduces the observed anomaly set;
4. intersect with the statistic's sign event and evaluate the two-sided
   truncated-normal p-value on the assembled region.

The over-conditioned variant uses only the single window containing the
observed statistic instead of the full union — valid but conservative, kept
for comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import gauss
from .datamodel import CovarianceSpec, DataPair, mat_rows, sigma_times, vec_rows
from .engine import AffineTriple, PatternAbortError, PipelineEngine
from .events import (
    LinearConstraintSet,
    ad_event_constraints,
    sign_event_constraints,
    solve_constraints,
)
from .gauss import RegionMassError
from .intervals import Interval, IntervalSet
from .network import ModelBundle, detect, detect_from_errors

#: Scan step, window-merge tolerance, and stall width, all as multiples of
#: the statistic's standard deviation (keeps the search scale-equivariant).
DELTA_Z_SCALE = 1e-3
MERGE_TOL_SCALE = 1e-9
STALL_WIDTH_SCALE = 1e-12

#: Half-width of the scanned z-range in standard deviations; the neglected
#: Gaussian mass beyond it is < 1e-80.
Z_RANGE_SIGMA = 20.0

_MAX_SCAN_STEPS = 200_000


@dataclass(frozen=True)
class TestDirection:
    """Linear functional eta_j of the vectorized data, with its null scale."""

    eta: np.ndarray
    variance: float
    z_obs: float
    sign_vector: np.ndarray

    def __post_init__(self) -> None:
        if not self.variance > 0.0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class NuisanceLine:
    """Data line a + b z from conditioning on the nuisance component."""

    offset: np.ndarray
    direction: np.ndarray
    z_range: tuple[float, float]


@dataclass(frozen=True)
class ScanResult:
    """Accepted-window union Z_1 plus the raw window holding z_obs."""

    region: IntervalSet
    oc_window: Interval
    diagnostics: dict[str, int]


@dataclass(frozen=True)
class InferenceReport:
    """Per-anomaly outcome; p-values are None when `failure` is set."""

    anomaly_index: int
    direction: TestDirection | None
    region: IntervalSet | None
    p_selective: float | None
    p_oc: float | None
    p_naive: float | None
    p_bonferroni: float | None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    failure: str | None = None


def build_eta(
    data: DataPair, cov: CovarianceSpec, anomalies: np.ndarray, j: int
) -> TestDirection:
    """Test direction for target anomaly j against the undetected rows.

    The sign vector is s = sign(X^t_j - mean over undetected target rows)
    with sign(0) = -1; eta carries s on row j, -s/|complement| on each
    undetected target row, and zeros on the source block, so that
    eta . vec(X) equals the l1-type statistic sum_k |X^t_jk - mean_k|.
    """
    anomalies = np.asarray(anomalies, dtype=int)
    if j not in anomalies:
        raise ValueError(f"index {j} is not among the detected anomalies")
    mask = np.ones(data.n_t, dtype=bool)
    mask[anomalies] = False
    comp = np.flatnonzero(mask)
    if comp.size == 0:
        raise ValueError("every target row is anomalous; no reference rows left")
    diff = data.target[j] - data.target[comp].mean(axis=0)
    s = np.where(diff > 0.0, 1.0, -1.0)
    eta2 = np.zeros((data.n_s + data.n_t, data.d))
    eta2[data.n_s + j] = s
    eta2[data.n_s + comp] = -s / comp.size
    eta = vec_rows(eta2)
    z_obs = float(eta @ data.vectorized())
    variance = float(eta @ sigma_times(cov, eta))
    return TestDirection(eta=eta, variance=variance, z_obs=z_obs, sign_vector=s)


def nuisance_line(
    direction: TestDirection, cov: CovarianceSpec, observed: np.ndarray
) -> NuisanceLine:
    """Decompose the observed data as a + b z along the test direction.

    b = Sigma eta / (eta' Sigma eta) gives eta . b = 1 and leaves
    a = observed - b z_obs orthogonal to eta in the Sigma metric.
    """
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    b = sigma_times(cov, direction.eta) / direction.variance
    a = observed - b * direction.z_obs
    half = Z_RANGE_SIGMA * direction.sigma
    return NuisanceLine(
        offset=a,
        direction=b,
        z_range=(direction.z_obs - half, direction.z_obs + half),
    )


def _replay_window(
    engine: PipelineEngine, z: float, z_min: float, z_max: float, rate: float,
    n_source: int,
):
    """One conditioned pass + detector replay + event solve at scan point z."""
    tap, out, iv = engine.window(z, z_min, z_max)
    errors = np.abs(tap.value - out.value).sum(axis=1)
    det = detect_from_errors(errors, rate, n_source)
    zv = solve_constraints(ad_event_constraints(tap, out, det.threshold_index, det.anomalous))
    return iv.intersect(zv), det


def divide_and_conquer(
    line: NuisanceLine,
    direction: TestDirection,
    bundle: ModelBundle,
    o_obs: np.ndarray,
    rate: float,
    n_source: int,
    engine: PipelineEngine | None = None,
    backend: str = "parallel",
) -> ScanResult:
    """Scan the line window by window and assemble the truncation union Z_1.

    Each scan point yields a window (pattern interval ∩ detector-event
    interval); windows whose replayed target anomaly set equals ``o_obs``
    join the union. The scan then jumps just past the window's right edge.
    Degenerate windows (empty, or thinner than the stall width) advance the
    scan by one step and are counted in the diagnostics.
    """
    sigma = direction.sigma
    dz = DELTA_Z_SCALE * sigma
    stall_width = STALL_WIDTH_SCALE * sigma
    z_min, z_max = line.z_range
    o_obs = np.asarray(o_obs, dtype=int)
    d = bundle.d
    n = line.offset.size // d
    if engine is None:
        engine = PipelineEngine(bundle, n, backend)
    engine.set_line(mat_rows(line.offset, n, d), mat_rows(line.direction, n, d))

    region = IntervalSet(merge_tol=MERGE_TOL_SCALE * sigma)
    diags = {"windows": 0, "accepted": 0, "empty": 0, "stalls": 0, "aborts": 0, "steps": 0}
    bounds = Interval(z_min, z_max)

    z = z_min
    while z <= z_max and diags["steps"] < _MAX_SCAN_STEPS:
        diags["steps"] += 1
        try:
            window, det = _replay_window(engine, z, z_min, z_max, rate, n_source)
        except PatternAbortError:
            diags["aborts"] += 1
            z += dz
            continue
        window = window.intersect(bounds)
        if window.empty:
            diags["empty"] += 1
            z += dz
            continue
        if window.width < stall_width:
            diags["stalls"] += 1
            z = max(window.hi, z) + dz
            continue
        diags["windows"] += 1
        if np.array_equal(det.target_anomalies, o_obs):
            region.add(window)
            diags["accepted"] += 1
        z = max(window.hi, z) + dz

    # The window holding the observed statistic, replayed directly at z_obs:
    # accepted by construction, and the region the over-conditioned variant
    # uses. Adding it also guards against a stall step skipping it.
    oc_window, det_obs = _replay_window(
        engine, direction.z_obs, z_min, z_max, rate, n_source
    )
    oc_window = oc_window.intersect(bounds)
    if not np.array_equal(det_obs.target_anomalies, o_obs):
        raise RuntimeError(
            "replay at the observed statistic changed the anomaly set "
            f"({det_obs.target_anomalies.tolist()} vs {o_obs.tolist()})"
        )
    region.add(oc_window)
    diags["accepted"] += 1
    return ScanResult(region=region, oc_window=oc_window, diagnostics=diags)


def selective_p(direction: TestDirection, region: IntervalSet) -> float:
    """Two-sided truncated-normal p-value of z_obs on the region."""
    tol = 1e-9 * direction.sigma
    if not region.contains(direction.z_obs, tol=tol):
        raise ValueError("truncation region does not contain the observed statistic")
    return gauss.truncated_two_sided_p(
        direction.z_obs, region.as_array(), direction.sigma
    )


def naive_p(direction: TestDirection) -> float:
    """Unconditional two-sided p-value (invalid after selection)."""
    return math.exp(gauss.log_naive_two_sided(direction.z_obs, direction.sigma))


def bonferroni_p(direction: TestDirection, n_t: int) -> float:
    """Naive p corrected by the 2^{n_t} possible target anomaly subsets."""
    log_p = n_t * math.log(2.0) + gauss.log_naive_two_sided(
        direction.z_obs, direction.sigma
    )
    return math.exp(min(0.0, log_p))


def _sign_region(
    line: NuisanceLine, direction: TestDirection, anomalies: np.ndarray, j: int,
    n_source: int, n: int, d: int,
) -> Interval:
    a2 = mat_rows(line.offset, n, d)
    b2 = mat_rows(line.direction, n, d)
    triple = AffineTriple(a2 + b2 * direction.z_obs, a2, b2, direction.z_obs)
    cs = sign_event_constraints(triple, j, anomalies, direction.sign_vector, n_source)
    return solve_constraints(cs)


def infer_anomaly(
    data: DataPair,
    cov: CovarianceSpec,
    bundle: ModelBundle,
    anomalies: np.ndarray,
    j: int,
    rate: float = 0.05,
    engine: PipelineEngine | None = None,
    backend: str = "parallel",
) -> InferenceReport:
    """Full selective-inference pipeline for one detected anomaly.

    Diagnostics include scan counters and the wall time (``elapsed_s``);
    callers that persist reports should drop the timing entry to keep the
    artifact deterministic.
    """
    t0 = time.perf_counter()
    direction: TestDirection | None = None
    try:
        direction = build_eta(data, cov, anomalies, j)
        line = nuisance_line(direction, cov, data.vectorized())
        scan = divide_and_conquer(
            line, direction, bundle, anomalies, rate, data.n_s,
            engine=engine, backend=backend,
        )
        z2 = _sign_region(
            line, direction, anomalies, j, data.n_s, data.n_s + data.n_t, data.d
        )
        region = scan.region.intersect_interval(z2)
        p_sel = selective_p(direction, region)
        oc = scan.oc_window.intersect(z2)
        p_oc = gauss.truncated_two_sided_p(
            direction.z_obs, np.array([[oc.lo, oc.hi]]), direction.sigma
        )
        diags = dict(scan.diagnostics)
        diags["region_intervals"] = len(region)
        diags["elapsed_s"] = time.perf_counter() - t0
        return InferenceReport(
            anomaly_index=int(j),
            direction=direction,
            region=region,
            p_selective=p_sel,
            p_oc=p_oc,
            p_naive=naive_p(direction),
            p_bonferroni=bonferroni_p(direction, data.n_t),
            diagnostics=diags,
        )
    except (RegionMassError, PatternAbortError, ValueError, RuntimeError) as exc:
        return InferenceReport(
            anomaly_index=int(j),
            direction=direction,
            region=None,
            p_selective=None,
            p_oc=None,
            p_naive=naive_p(direction) if direction is not None else None,
            p_bonferroni=bonferroni_p(direction, data.n_t) if direction else None,
            diagnostics={"elapsed_s": time.perf_counter() - t0},
            failure=f"{type(exc).__name__}: {exc}",
        )


def stand_da(
    data: DataPair,
    cov: CovarianceSpec,
    bundle: ModelBundle,
    rate: float = 0.05,
    alpha: float = 0.05,
    backend: str = "parallel",
) -> list[InferenceReport]:
    """Detect anomalies and test each one; failures stay per-anomaly.

    ``alpha`` is carried for report consumers; the p-values themselves do
    not depend on it.
    """
    del alpha
    det = detect(bundle, data, rate)
    if det.target_anomalies.size == 0:
        return []
    engine = PipelineEngine(bundle, data.n_s + data.n_t, backend)
    return [
        infer_anomaly(
            data, cov, bundle, det.target_anomalies, int(j), rate, engine=engine
        )
        for j in det.target_anomalies
    ]


def stand_da_oc(
    data: DataPair,
    cov: CovarianceSpec,
    bundle: ModelBundle,
    rate: float = 0.05,
    backend: str = "parallel",
) -> dict[int, float]:
    """Over-conditioned p-values only: one window per anomaly, no line scan."""
    det = detect(bundle, data, rate)
    out: dict[int, float] = {}
    if det.target_anomalies.size == 0:
        return out
    n = data.n_s + data.n_t
    engine = PipelineEngine(bundle, n, backend)
    for j in det.target_anomalies:
        j = int(j)
        direction = build_eta(data, cov, det.target_anomalies, j)
        line = nuisance_line(direction, cov, data.vectorized())
        engine.set_line(
            mat_rows(line.offset, n, data.d), mat_rows(line.direction, n, data.d)
        )
        z_min, z_max = line.z_range
        window, det_obs = _replay_window(
            engine, direction.z_obs, z_min, z_max, rate, data.n_s
        )
        if not np.array_equal(det_obs.target_anomalies, det.target_anomalies):
            raise RuntimeError("observed-window replay changed the anomaly set")
        z2 = _sign_region(
            line, direction, det.target_anomalies, j, data.n_s, n, data.d
        )
        oc = window.intersect(z2).intersect(Interval(z_min, z_max))
        out[j] = gauss.truncated_two_sided_p(
            direction.z_obs, np.array([[oc.lo, oc.hi]]), direction.sigma
        )
    return out
