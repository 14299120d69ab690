"""Non-network selection events as linear inequality systems in z.

Two events are built here, both restricted to the line X(z) = A + B z:

- the detector event: keeping every reconstruction-residual sign and the
  error ranking against the threshold row fixed keeps the detected anomaly
  set (and threshold row) constant;
- the sign event: keeping the component-wise signs of "target row j minus
  the mean of the undetected target rows" fixed keeps the test statistic a
  fixed linear functional of z.

Every inequality is linear once the local signs are read off at the scan
point, so each event solves to one interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import DimensionError
from .engine import AffineTriple
from .intervals import Interval


@dataclass(frozen=True)
class LinearConstraintSet:
    """System { coeffs[i] * z <= bounds[i] }."""

    coeffs: np.ndarray
    bounds: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        bounds = np.asarray(self.bounds, dtype=np.float64).reshape(-1)
        if coeffs.size != bounds.size:
            raise DimensionError(
                f"{coeffs.size} coefficients vs {bounds.size} bounds"
            )
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "bounds", bounds)

    def concat(self, other: "LinearConstraintSet") -> "LinearConstraintSet":
        return LinearConstraintSet(
            np.concatenate([self.coeffs, other.coeffs]),
            np.concatenate([self.bounds, other.bounds]),
        )


def solve_constraints(cs: LinearConstraintSet) -> Interval:
    """Intersect the half-lines c z <= b into one interval.

    Positive coefficients cap z above at b/c, negative ones below; zero
    coefficients are pure feasibility checks (b >= 0 or the whole system is
    empty). Order-independent by construction (max/min folds).
    """
    c, b = cs.coeffs, cs.bounds
    if c.size == 0:
        return Interval(-np.inf, np.inf)
    pos = c > 0.0
    neg = c < 0.0
    zero = ~(pos | neg)
    if bool((b[zero] < 0.0).any()):
        return Interval(np.inf, -np.inf)
    lo = float((b[neg] / c[neg]).max()) if neg.any() else -np.inf
    hi = float((b[pos] / c[pos]).min()) if pos.any() else np.inf
    return Interval(lo, hi)


def ad_event_constraints(
    tap: AffineTriple,
    out: AffineTriple,
    threshold_index: int,
    anomalous: np.ndarray,
) -> LinearConstraintSet:
    """Inequalities pinning the detector outcome observed at the scan point.

    ``tap`` and ``out`` are the extractor-output and autoencoder-output
    triples; ``anomalous`` lists the stacked-row indices flagged at tap.z
    and ``threshold_index`` the flagged row attaining the threshold error.

    Emits, with residual signs S = sign(tap.value - out.value) (sign(0) =
    -1) and per-row error lines R_i(z) = alpha_i + beta_i z:

    - per entry: S_ij ((dA)_ij + (dB)_ij z) >= 0 (residual keeps its sign),
    - per row i != threshold row k: R_i >= R_k for flagged rows and
      R_i <= R_k for the rest (ranking against the threshold row fixed).
    """
    if tap.value.shape != out.value.shape:
        raise DimensionError(
            f"tap shape {tap.value.shape} != out shape {out.value.shape}"
        )
    dx = tap.value - out.value
    da = tap.offset - out.offset
    db = tap.slope - out.slope
    signs = np.where(dx > 0.0, 1.0, -1.0)
    sa = signs * da
    sb = signs * db
    # sign constraints: -S dB z <= S dA
    coeffs = [(-sb).reshape(-1)]
    bounds = [sa.reshape(-1)]
    alpha = sa.sum(axis=1)
    beta = sb.sum(axis=1)
    n = dx.shape[0]
    k = int(threshold_index)
    is_anom = np.zeros(n, dtype=bool)
    is_anom[np.asarray(anomalous, dtype=int)] = True
    if not is_anom[k]:
        raise ValueError(f"threshold row {k} is not in the anomalous set")
    others = np.arange(n) != k
    # flagged rows: (beta_k - beta_i) z <= alpha_i - alpha_k; rest reversed
    flip = np.where(is_anom[others], 1.0, -1.0)
    coeffs.append(flip * (beta[k] - beta[others]))
    bounds.append(flip * (alpha[others] - alpha[k]))
    return LinearConstraintSet(np.concatenate(coeffs), np.concatenate(bounds))


def sign_event_constraints(
    data_triple: AffineTriple,
    j: int,
    anomalies: np.ndarray,
    sign_vector: np.ndarray,
    n_source: int,
) -> LinearConstraintSet:
    """Inequalities keeping the statistic's subtraction signs at s_j.

    ``data_triple`` is the raw stacked-data triple; ``j`` and ``anomalies``
    are 0-based target indices; the contrast picks target row j minus the
    mean of the undetected target rows (zero on every source row). Emits
    s_k (contrast . (A + B z))_k >= 0 per feature k.
    """
    n, d = data_triple.offset.shape
    n_t = n - n_source
    anomalies = np.asarray(anomalies, dtype=int)
    s = np.asarray(sign_vector, dtype=np.float64).reshape(-1)
    if s.size != d:
        raise DimensionError(f"sign vector length {s.size} != d {d}")
    if anomalies.size >= n_t:
        raise ValueError("every target row is anomalous; contrast undefined")
    mask = np.ones(n_t, dtype=bool)
    mask[anomalies] = False
    comp = np.flatnonzero(mask)
    contrast = np.zeros(n)
    contrast[n_source + j] = 1.0
    contrast[n_source + comp] = -1.0 / comp.size
    proj_a = contrast @ data_triple.offset
    proj_b = contrast @ data_triple.slope
    return LinearConstraintSet(-s * proj_b, s * proj_a)
