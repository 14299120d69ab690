"""Fused data-parallel kernels for the conditioned forward pass.

One jitted driver walks a whole network: affine layers compute the three
matrix products (value/offset/slope) in a single fused loop nest, and ReLU
layers fold their half-line constraints with associative min/max reductions
while zeroing inactive entries in place. All per-layer output buffers are
allocated once per (bundle, row count) and reused across the thousands of
window calls a line search makes.

The in-place ReLU means a driver run consumes its input buffers; the
pipeline therefore copies the extractor output into dedicated tap buffers
before handing the autoencoder the originals.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit, prange
from numba import types
from numba.core.errors import NumbaWarning
from numba.typed import List as TypedList

# Older TBB runtimes trigger a version warning while numba probes threading
# layers; the probe falls back cleanly, so the warning is pure noise here.
warnings.filterwarnings(
    "ignore", message=".*TBB_INTERFACE_VERSION.*", category=NumbaWarning
)

from .engine import ZERO_SLOPE_TOL, AffineTriple, PatternAbortError
from .intervals import Interval
from .network import Affine, ModelBundle, PiecewiseLinearNetwork

_MAT = types.float64[:, ::1]
_VEC = types.float64[::1]


@njit(cache=True, parallel=True)
def _run_net(
    kinds, bufidx, weights, biases, xb, ab, bb, x0, a0, b0,
    row_lo, row_hi, row_bad, lo, hi,
):
    """Drive one network; returns (abort_layer or -1, lo, hi).

    row_lo/row_hi/row_bad are per-row scratch: each ReLU folds its
    constraints row-parallel into them, then a short sequential pass
    combines the rows (keeps the hot loop free of cross-iteration
    reductions).
    """
    cur_x, cur_a, cur_b = x0, a0, b0
    for l in range(kinds.shape[0]):
        if kinds[l] == 0:
            w = weights[l]
            c = biases[l]
            j = bufidx[l]
            ox, oa, ob = xb[j], ab[j], bb[j]
            n = cur_x.shape[0]
            din = w.shape[0]
            dout = w.shape[1]
            for i in prange(n):
                for k in range(dout):
                    sx = c[k]
                    sa = c[k]
                    sb = 0.0
                    for t in range(din):
                        wk = w[t, k]
                        sx += cur_x[i, t] * wk
                        sa += cur_a[i, t] * wk
                        sb += cur_b[i, t] * wk
                    ox[i, k] = sx
                    oa[i, k] = sa
                    ob[i, k] = sb
            cur_x, cur_a, cur_b = ox, oa, ob
        else:
            n = cur_x.shape[0]
            d = cur_x.shape[1]
            for i in prange(n):
                rlo = -np.inf
                rhi = np.inf
                rbad = np.int8(0)
                for k in range(d):
                    xv = cur_x[i, k]
                    av = cur_a[i, k]
                    bv = cur_b[i, k]
                    pos = xv > 0.0
                    f = 1.0 if pos else -1.0
                    if bv >= ZERO_SLOPE_TOL or bv <= -ZERO_SLOPE_TOL:
                        r = -av / bv
                        if f * bv > 0.0:
                            if r > rlo:
                                rlo = r
                        else:
                            if r < rhi:
                                rhi = r
                    else:
                        if f * av < 0.0:
                            rbad = np.int8(1)
                    if not pos:
                        cur_x[i, k] = 0.0
                        cur_a[i, k] = 0.0
                        cur_b[i, k] = 0.0
                row_lo[i] = rlo
                row_hi[i] = rhi
                row_bad[i] = rbad
            bad = False
            for i in range(n):
                if row_lo[i] > lo:
                    lo = row_lo[i]
                if row_hi[i] < hi:
                    hi = row_hi[i]
                if row_bad[i] != 0:
                    bad = True
            if bad or lo > hi:
                return l, lo, hi
    return -1, lo, hi


class _NetPlan:
    """Layer tables and output buffers for one network at one row count."""

    def __init__(self, net: PiecewiseLinearNetwork, n_rows: int):
        self._row_lo = np.empty(n_rows)
        self._row_hi = np.empty(n_rows)
        self._row_bad = np.empty(n_rows, dtype=np.int8)
        kinds: list[int] = []
        bufidx: list[int] = []
        self.weights = TypedList.empty_list(_MAT)
        self.biases = TypedList.empty_list(_VEC)
        self.xb = TypedList.empty_list(_MAT)
        self.ab = TypedList.empty_list(_MAT)
        self.bb = TypedList.empty_list(_MAT)
        dummy_w = np.zeros((1, 1))
        dummy_c = np.zeros(1)
        self._out_idx = -1
        for layer in net.layers:
            if isinstance(layer, Affine):
                kinds.append(0)
                self.weights.append(np.ascontiguousarray(layer.weight))
                self.biases.append(np.ascontiguousarray(layer.bias))
                for buf in (self.xb, self.ab, self.bb):
                    buf.append(np.zeros((n_rows, layer.d_out)))
                self._out_idx = len(self.xb) - 1
                bufidx.append(self._out_idx)
            else:
                kinds.append(1)
                self.weights.append(dummy_w)
                self.biases.append(dummy_c)
                bufidx.append(-1)
        self.kinds = np.array(kinds, dtype=np.int8)
        self.bufidx = np.array(bufidx, dtype=np.int64)
        self.n_layers = len(kinds)

    def run(self, x0, a0, b0, lo, hi):
        abort, lo, hi = _run_net(
            self.kinds, self.bufidx, self.weights, self.biases,
            self.xb, self.ab, self.bb, x0, a0, b0,
            self._row_lo, self._row_hi, self._row_bad, lo, hi,
        )
        if self._out_idx >= 0:
            out = (self.xb[self._out_idx], self.ab[self._out_idx], self.bb[self._out_idx])
        else:
            out = (x0, a0, b0)
        return int(abort), float(lo), float(hi), out


class PipelinePlan:
    """Workspace-owning extractor+autoencoder driver for one bundle."""

    def __init__(self, bundle: ModelBundle, n_rows: int):
        self.bundle = bundle
        self.n_rows = n_rows
        self._ext = _NetPlan(bundle.extractor, n_rows)
        self._ae = _NetPlan(bundle.autoencoder, n_rows)
        d, d_rep = bundle.d, bundle.d_rep
        self._a2 = np.zeros((n_rows, d))
        self._b2 = np.zeros((n_rows, d))
        self._x0 = np.zeros((n_rows, d))
        self._a0 = np.zeros((n_rows, d))
        self._b0 = np.zeros((n_rows, d))
        self._tap_x = np.zeros((n_rows, d_rep))
        self._tap_a = np.zeros((n_rows, d_rep))
        self._tap_b = np.zeros((n_rows, d_rep))

    def set_line(self, offset: np.ndarray, slope: np.ndarray) -> None:
        self._a2[:] = offset
        self._b2[:] = slope

    def window(self, z: float, lo: float, hi: float):
        np.multiply(self._b2, z, out=self._x0)
        self._x0 += self._a2
        self._a0[:] = self._a2
        self._b0[:] = self._b2
        abort, lo, hi, (ex, ea, eb) = self._ext.run(self._x0, self._a0, self._b0, lo, hi)
        if abort >= 0:
            raise PatternAbortError(abort)
        self._tap_x[:] = ex
        self._tap_a[:] = ea
        self._tap_b[:] = eb
        abort, lo, hi, (ox, oa, ob) = self._ae.run(ex, ea, eb, lo, hi)
        if abort >= 0:
            raise PatternAbortError(self._ext.n_layers + abort)
        tap = AffineTriple(self._tap_x, self._tap_a, self._tap_b, z)
        out = AffineTriple(ox, oa, ob, z)
        return tap, out, Interval(lo, hi)
