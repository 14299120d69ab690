"""Conditioned forward propagation of an affinely parametrized dataset.

The inference line search restricts the data to a line ``X(z) = A + B z``
and needs two things at every scan point: the network output as an explicit
affine function of z, and the interval of z around the current point on
which the network keeps its activation pattern (so the affine form stays
valid). Both come from propagating the triple (X, A, B) layer by layer:

- affine layers act linearly on all three matrices,
- ReLU layers read the sign pattern off X, zero the inactive entries of all
  three matrices, and fold one half-line constraint per entry into a running
  interval [lo, hi]: keeping entry (i, j) on its side of zero means
  F_ij (A_ij + B_ij z) >= 0.

With the pattern fixed, the whole network is one affine map, so the final
(offset, slope) reproduce the plain forward pass exactly on the interval.

Two backends implement the same pipeline: "sequential" composes the numpy
reference ops below (and can record per-layer constraint vectors for oracle
comparison); "parallel" runs fused element-parallel kernels over buffers
preallocated once per network shape (see _kernels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import DimensionError
from .intervals import Interval
from .network import Affine, ModelBundle, PiecewiseLinearNetwork, ReLU

#: Slopes smaller than this are treated as exactly zero when dividing -A/B,
#: so round-off-level slopes cannot inject astronomically wrong bounds.
ZERO_SLOPE_TOL = 1e-14

EMPTY_INTERVAL = Interval(np.inf, -np.inf)


class PatternAbortError(RuntimeError):
    """Interval became empty mid-network: the pattern at z is inconsistent."""

    def __init__(self, layer_index: int):
        super().__init__(f"empty interval after ReLU at layer {layer_index}")
        self.layer_index = layer_index


@dataclass(frozen=True)
class AffineTriple:
    """Live state (X, A, B) with X = A + B z at the carried scan point z."""

    value: np.ndarray
    offset: np.ndarray
    slope: np.ndarray
    z: float

    def __post_init__(self) -> None:
        if not (self.value.shape == self.offset.shape == self.slope.shape):
            raise DimensionError(
                f"triple shapes differ: {self.value.shape}, "
                f"{self.offset.shape}, {self.slope.shape}"
            )

    @classmethod
    def on_line(cls, offset: np.ndarray, slope: np.ndarray, z: float) -> "AffineTriple":
        offset = np.asarray(offset, dtype=np.float64)
        slope = np.asarray(slope, dtype=np.float64)
        return cls(offset + slope * z, offset, slope, float(z))

    def max_inconsistency(self) -> float:
        """Largest |value - (offset + slope z)| entry; ~0 for a valid triple."""
        return float(np.max(np.abs(self.value - (self.offset + self.slope * self.z))))


def affine_matmul(t: AffineTriple, w: np.ndarray) -> AffineTriple:
    """Right-multiply all three matrices by a weight; shapes must chain."""
    w = np.asarray(w, dtype=np.float64)
    if t.value.shape[1] != w.shape[0]:
        raise DimensionError(
            f"triple width {t.value.shape[1]} != weight rows {w.shape[0]}"
        )
    return AffineTriple(t.value @ w, t.offset @ w, t.slope @ w, t.z)


def affine_add_bias(t: AffineTriple, c: np.ndarray) -> AffineTriple:
    """Add a bias row to value and offset; the slope is z-independent."""
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.size != t.value.shape[1]:
        raise DimensionError(f"bias length {c.size} != width {t.value.shape[1]}")
    return AffineTriple(t.value + c, t.offset + c, t.slope, t.z)


def si_relu(
    t: AffineTriple,
    interval: Interval,
    record: list | None = None,
) -> tuple[AffineTriple, Interval]:
    """Apply ReLU under the pattern observed at t.z and tighten the interval.

    The pattern is F = sign(value) with sign(0) = -1; entries with F = -1
    are zeroed in all three matrices. Each entry contributes the half-line
    on which F_ij (A_ij + B_ij z) >= 0:

    - F B > 0 raises the lower bound to -A/B,
    - F B < 0 lowers the upper bound to -A/B,
    - B = 0 is a constant constraint: no change when F A >= 0, otherwise
      the interval comes back empty (never raised here; callers decide).

    When ``record`` is a list, the constraint vectors (p, q) with the event
    written as p z <= q elementwise are appended for oracle comparison.
    """
    if interval.empty:
        raise ValueError("si_relu needs a nonempty input interval")
    x, a, b = t.value, t.offset, t.slope
    f = np.where(x > 0.0, 1.0, -1.0)
    if record is not None:
        record.append(((-f * b).reshape(-1), (f * a).reshape(-1)))
    lo, hi = interval.lo, interval.hi
    live = np.abs(b) >= ZERO_SLOPE_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(live, -a / np.where(live, b, 1.0), 0.0)
    fb = f * b
    raise_lo = live & (fb > 0.0)
    drop_hi = live & (fb < 0.0)
    if raise_lo.any():
        lo = max(lo, float(ratio[raise_lo].max()))
    if drop_hi.any():
        hi = min(hi, float(ratio[drop_hi].min()))
    active = x > 0.0
    out = AffineTriple(
        np.where(active, x, 0.0),
        np.where(active, a, 0.0),
        np.where(active, b, 0.0),
        t.z,
    )
    if bool((~live & (f * a < 0.0)).any()):
        return out, EMPTY_INTERVAL
    return out, Interval(lo, hi)


def conditioned_forward(
    net: PiecewiseLinearNetwork,
    t0: AffineTriple,
    interval0: Interval,
    tap_after: int | None = None,
    record: list | None = None,
) -> tuple[AffineTriple, Interval, AffineTriple | None]:
    """Propagate a triple through the layers, folding the pattern interval.

    Returns (final triple, interval, tap) where tap is the triple snapshot
    right after layer index ``tap_after`` (None when not requested). Raises
    :class:`PatternAbortError` if the interval empties mid-network.
    """
    if interval0.empty:
        raise ValueError("interval0 is empty")
    t, iv = t0, interval0
    tap: AffineTriple | None = None
    for idx, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            t = affine_add_bias(affine_matmul(t, layer.weight), layer.bias)
        else:
            t, iv = si_relu(t, iv, record)
            if iv.empty:
                raise PatternAbortError(idx)
        if tap_after is not None and idx == tap_after:
            tap = t
    return t, iv, tap


class PipelineEngine:
    """Extractor+autoencoder conditioned pass with reusable workspaces.

    One instance serves one bundle shape and one row count; the line search
    calls :meth:`window` thousands of times, so the parallel backend keeps
    all per-layer buffers allocated across calls. Instances are single-owner:
    run concurrent searches on separate instances.
    """

    def __init__(self, bundle: ModelBundle, n_rows: int, backend: str = "parallel"):
        if backend not in ("sequential", "parallel"):
            raise ValueError(f"unknown backend {backend!r}")
        self.bundle = bundle
        self.n_rows = int(n_rows)
        self.backend = backend
        self._offset: np.ndarray | None = None
        self._slope: np.ndarray | None = None
        if backend == "parallel":
            from . import _kernels

            self._plan = _kernels.PipelinePlan(bundle, self.n_rows)

    def set_line(self, offset: np.ndarray, slope: np.ndarray) -> None:
        """Install the line X(z) = offset + slope z, both (n_rows, d)."""
        offset = np.ascontiguousarray(offset, dtype=np.float64)
        slope = np.ascontiguousarray(slope, dtype=np.float64)
        want = (self.n_rows, self.bundle.d)
        if offset.shape != want or slope.shape != want:
            raise DimensionError(
                f"line matrices must be {want}, got {offset.shape}/{slope.shape}"
            )
        self._offset, self._slope = offset, slope
        if self.backend == "parallel":
            self._plan.set_line(offset, slope)

    def window(
        self, z: float, lo: float, hi: float
    ) -> tuple[AffineTriple, AffineTriple, Interval]:
        """Conditioned pass at scan point z, folding into [lo, hi].

        Returns (tap, out, interval): the triple at the extractor output,
        the triple at the autoencoder output, and the pattern interval.
        Parallel-backend triples view reused buffers — copy to retain them
        past the next call.
        """
        if self._offset is None:
            raise RuntimeError("set_line must be called before window")
        if not lo <= z <= hi:
            raise ValueError(f"scan point {z} outside [{lo}, {hi}]")
        if self.backend == "sequential":
            t0 = AffineTriple.on_line(self._offset, self._slope, z)
            tap, iv, _ = conditioned_forward(self.bundle.extractor, t0, Interval(lo, hi))
            out, iv, _ = conditioned_forward(self.bundle.autoencoder, tap, iv)
            return tap, out, iv
        return self._plan.window(z, lo, hi)
