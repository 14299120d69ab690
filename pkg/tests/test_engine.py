"""Conditioned forward pass: affine triples, ReLU interval folding, backends.

The load-bearing property is *faithfulness*: inside the interval returned
at z0, the network output equals offset + slope * z entrywise, and the
activation pattern does not move. Just past a finite endpoint, some sign
must flip. Both are checked against the plain forward pass.
"""

import numpy as np
import pytest

from standa.datamodel import DataPair, DimensionError
from standa.engine import (
    AffineTriple,
    PatternAbortError,
    PipelineEngine,
    affine_add_bias,
    affine_matmul,
    conditioned_forward,
    si_relu,
)
from standa.experiments import make_random_bundle
from standa.intervals import Interval
from standa.network import Affine, PiecewiseLinearNetwork, ReLU, forward


def _triple(rng, shape, z=0.3):
    return AffineTriple.on_line(rng.normal(size=shape), rng.normal(size=shape), z)


class TestAffineOps:
    def test_triple_shape_check(self):
        with pytest.raises(DimensionError):
            AffineTriple(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)), 0.0)

    def test_on_line_consistency(self):
        rng = np.random.default_rng(0)
        t = _triple(rng, (4, 3), z=-1.7)
        assert t.max_inconsistency() < 1e-14

    def test_matmul_identity(self):
        rng = np.random.default_rng(1)
        t = _triple(rng, (3, 4))
        out = affine_matmul(t, np.eye(4))
        assert np.array_equal(out.value, t.value)
        assert np.array_equal(out.slope, t.slope)

    def test_matmul_against_loop_oracle(self):
        rng = np.random.default_rng(2)
        t = _triple(rng, (3, 5))
        w = rng.normal(size=(5, 2))
        out = affine_matmul(t, w)
        for mat, ref in ((out.value, t.value), (out.offset, t.offset), (out.slope, t.slope)):
            for i in range(3):
                for j in range(2):
                    acc = sum(ref[i, k] * w[k, j] for k in range(5))
                    assert mat[i, j] == pytest.approx(acc, abs=1e-12)
        assert out.max_inconsistency() < 1e-12

    def test_bias_leaves_slope_alone(self):
        rng = np.random.default_rng(3)
        t = _triple(rng, (2, 3))
        out = affine_add_bias(t, np.array([1.0, -2.0, 0.5]))
        assert np.array_equal(out.slope, t.slope)
        assert np.allclose(out.value - t.value, [[1.0, -2.0, 0.5]] * 2)
        assert out.max_inconsistency() < 1e-12

    def test_shape_mismatches(self):
        rng = np.random.default_rng(4)
        t = _triple(rng, (2, 3))
        with pytest.raises(DimensionError):
            affine_matmul(t, np.zeros((4, 2)))
        with pytest.raises(DimensionError):
            affine_add_bias(t, np.zeros(2))


class TestSiRelu:
    def test_scalar_active_entry_tightens_upper_bound(self):
        # x(z) = 1 - 2z is positive at z=0; stays positive until z = 0.5
        t = AffineTriple.on_line(np.array([[1.0]]), np.array([[-2.0]]), 0.0)
        out, iv = si_relu(t, Interval(-np.inf, np.inf))
        assert iv == Interval(-np.inf, 0.5)
        assert out.value[0, 0] == 1.0

    def test_scalar_inactive_entry_tightens_lower_bound(self):
        # x(z) = -1 + 2z is negative at z=0 and zeroed; flips at z = 0.5
        t = AffineTriple.on_line(np.array([[-1.0]]), np.array([[2.0]]), 0.0)
        out, iv = si_relu(t, Interval(-np.inf, np.inf))
        assert iv == Interval(-np.inf, 0.5)
        assert out.value[0, 0] == 0.0
        assert out.slope[0, 0] == 0.0

    def test_sign_zero_counts_as_inactive(self):
        t = AffineTriple.on_line(np.array([[0.0]]), np.array([[0.0]]), 0.0)
        out, iv = si_relu(t, Interval(-1.0, 1.0))
        assert out.value[0, 0] == 0.0
        assert iv == Interval(-1.0, 1.0)  # 0 >= 0 holds for every z

    def test_constant_violation_empties_interval(self):
        # slope 0, positive value: fine; slope 0 with value forced negative
        # after the pattern says "active" cannot happen, so exercise the
        # inactive branch: F = -1, A = +1, B = 0 means -(A) >= 0 fails.
        t = AffineTriple(np.array([[-0.5]]), np.array([[1.0]]), np.array([[0.0]]), 0.0)
        _, iv = si_relu(t, Interval(-1.0, 1.0))
        assert iv.empty

    def test_interval_never_grows(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            t = _triple(rng, (4, 3), z=float(rng.normal()))
            iv0 = Interval(t.z - abs(rng.normal()), t.z + abs(rng.normal()))
            _, iv = si_relu(t, iv0)
            assert iv.lo >= iv0.lo and iv.hi <= iv0.hi

    def test_recorded_constraints_describe_the_event(self):
        # p z <= q must hold exactly on the returned interval and define it
        rng = np.random.default_rng(8)
        t = _triple(rng, (3, 2), z=0.1)
        rec = []
        _, iv = si_relu(t, Interval(-np.inf, np.inf), record=rec)
        (p, q) = rec[0]
        f = np.where(t.value > 0, 1.0, -1.0).reshape(-1)
        assert np.allclose(p, -f * t.slope.reshape(-1))
        assert np.allclose(q, f * t.offset.reshape(-1))
        for z in np.linspace(iv.lo + 1e-9, iv.hi - 1e-9, 7):
            assert np.all(p * z <= q + 1e-9)
        if np.isfinite(iv.hi):
            assert np.any(p * (iv.hi + 1e-6) > q)

    def test_pattern_stable_across_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            t = _triple(rng, (5, 4), z=float(rng.normal()))
            _, iv = si_relu(t, Interval(t.z - 10, t.z + 10))
            pattern = t.value > 0
            lo = max(iv.lo, t.z - 10) + 1e-9
            hi = min(iv.hi, t.z + 10) - 1e-9
            for z in np.linspace(lo, hi, 20):
                x = t.offset + t.slope * z
                assert np.array_equal(x > 0, pattern)


class TestConditionedForward:
    def test_affine_only_keeps_interval(self):
        rng = np.random.default_rng(10)
        net = PiecewiseLinearNetwork(
            (Affine(rng.normal(size=(3, 2)), rng.normal(size=2)),), 3
        )
        t0 = _triple(rng, (2, 3))
        t, iv, _ = conditioned_forward(net, t0, Interval(-2.0, 5.0))
        assert iv == Interval(-2.0, 5.0)
        assert np.allclose(t.value, forward(net, t0.value), atol=1e-12)

    def test_tap_snapshot(self):
        rng = np.random.default_rng(11)
        net = PiecewiseLinearNetwork(
            (
                Affine(rng.normal(size=(3, 4)), rng.normal(size=4)),
                ReLU(),
                Affine(rng.normal(size=(4, 2)), rng.normal(size=2)),
            ),
            3,
        )
        t0 = _triple(rng, (2, 3))
        t, _, tap = conditioned_forward(net, t0, Interval(-10, 10), tap_after=1)
        assert tap is not None and tap.value.shape == (2, 4)
        # tap is the post-ReLU state: nonnegative by construction
        assert np.all(tap.value >= 0)
        assert not np.array_equal(tap.value, t.value)

    def test_abort_reports_layer(self):
        # a ReLU fed a constant negative offset with "active" pattern cannot
        # happen; force the constant-violation branch with slope exactly 0
        net = PiecewiseLinearNetwork(
            (Affine(np.eye(1), np.zeros(1)), ReLU(), Affine(np.eye(1), np.zeros(1))), 1
        )
        t0 = AffineTriple(np.array([[-1.0]]), np.array([[1.0]]), np.array([[0.0]]), 0.0)
        with pytest.raises(PatternAbortError) as err:
            conditioned_forward(net, t0, Interval(-5.0, 5.0))
        assert err.value.layer_index == 1

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_faithful_inside_and_flips_outside(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = PiecewiseLinearNetwork(
            (
                Affine(rng.normal(size=(4, 6)), rng.normal(size=6) * 0.1),
                ReLU(),
                Affine(rng.normal(size=(6, 5)), rng.normal(size=5) * 0.1),
                ReLU(),
                Affine(rng.normal(size=(5, 3)), rng.normal(size=3) * 0.1),
            ),
            4,
        )
        offset = rng.normal(size=(6, 4))
        slope = rng.normal(size=(6, 4))
        z0 = float(rng.normal())
        t0 = AffineTriple.on_line(offset, slope, z0)
        t, iv, _ = conditioned_forward(net, t0, Interval(z0 - 50, z0 + 50))
        assert iv.contains(z0)

        def pattern(z):
            x = offset + slope * z
            pats = []
            for layer in net.layers:
                if isinstance(layer, Affine):
                    x = x @ layer.weight + layer.bias
                else:
                    pats.append(x > 0)
                    x = np.maximum(x, 0.0)
            return pats, x

        ref_pats, _ = pattern(z0)
        eps = 1e-9
        for z in np.linspace(iv.lo + eps, iv.hi - eps, 50):
            pats, x = pattern(z)
            assert np.allclose(t.offset + t.slope * z, x, atol=1e-8)
            for got, want in zip(pats, ref_pats):
                assert np.array_equal(got, want)
        # past each finite endpoint the pattern must change almost at once
        for z_out in (iv.lo - 1e-4, iv.hi + 1e-4):
            if not np.isfinite(z_out):
                continue
            pats, _ = pattern(z_out)
            assert any(
                not np.array_equal(got, want) for got, want in zip(pats, ref_pats)
            )

    def test_current_point_always_inside(self):
        rng = np.random.default_rng(13)
        net = PiecewiseLinearNetwork(
            (Affine(rng.normal(size=(3, 5)), rng.normal(size=5)), ReLU(),
             Affine(rng.normal(size=(5, 3)), rng.normal(size=3))),
            3,
        )
        for _ in range(40):
            z0 = float(rng.normal() * 3)
            t0 = _triple(rng, (4, 3), z=z0)
            _, iv, _ = conditioned_forward(net, t0, Interval(z0 - 100, z0 + 100))
            assert iv.contains(z0, tol=1e-12)


class TestPipelineEngine:
    def _line(self, rng, n, d):
        return rng.normal(size=(n, d)), 0.5 * rng.normal(size=(n, d))

    def test_backend_windows_agree(self, tiny_bundle):
        rng = np.random.default_rng(14)
        n = 8
        seq = PipelineEngine(tiny_bundle, n, backend="sequential")
        par = PipelineEngine(tiny_bundle, n, backend="parallel")
        for trial in range(10):
            offset, slope = self._line(rng, n, tiny_bundle.d)
            seq.set_line(offset, slope)
            par.set_line(offset, slope)
            z = float(rng.normal())
            ts, os_, ivs = seq.window(z, z - 30, z + 30)
            tp, op, ivp = par.window(z, z - 30, z + 30)
            assert np.allclose(ts.value, tp.value, atol=1e-12)
            assert np.allclose(os_.offset, op.offset, atol=1e-12)
            assert np.allclose(os_.slope, op.slope, atol=1e-12)
            assert ivs.lo == pytest.approx(ivp.lo, abs=1e-12)
            assert ivs.hi == pytest.approx(ivp.hi, abs=1e-12)

    def test_window_matches_plain_forward(self, tiny_bundle):
        rng = np.random.default_rng(15)
        n = 6
        eng = PipelineEngine(tiny_bundle, n, backend="sequential")
        offset, slope = self._line(rng, n, tiny_bundle.d)
        eng.set_line(offset, slope)
        z = 0.25
        tap, out, iv = eng.window(z, -50, 50)
        x = offset + slope * z
        rep = forward(tiny_bundle.extractor, x)
        rec = forward(tiny_bundle.autoencoder, rep)
        assert np.allclose(tap.value, rep, atol=1e-10)
        assert np.allclose(out.value, rec, atol=1e-10)
        assert iv.contains(z)

    def test_set_line_required(self, tiny_bundle):
        eng = PipelineEngine(tiny_bundle, 4, backend="sequential")
        with pytest.raises(RuntimeError):
            eng.window(0.0, -1.0, 1.0)

    def test_line_shape_checked(self, tiny_bundle):
        eng = PipelineEngine(tiny_bundle, 4, backend="sequential")
        with pytest.raises(DimensionError):
            eng.set_line(np.zeros((4, 3)), np.zeros((4, 3)))

    def test_unknown_backend(self, tiny_bundle):
        with pytest.raises(ValueError):
            PipelineEngine(tiny_bundle, 4, backend="gpu")

    def test_scan_point_must_be_inside(self, tiny_bundle):
        eng = PipelineEngine(tiny_bundle, 4, backend="sequential")
        eng.set_line(np.zeros((4, 4)), np.zeros((4, 4)))
        with pytest.raises(ValueError):
            eng.window(2.0, -1.0, 1.0)

    def test_parallel_triples_are_views(self, tiny_bundle):
        # documented sharp edge: results view reused buffers across calls
        rng = np.random.default_rng(16)
        eng = PipelineEngine(tiny_bundle, 5, backend="parallel")
        offset, slope = self._line(rng, 5, tiny_bundle.d)
        eng.set_line(offset, slope)
        _, out1, _ = eng.window(0.0, -20, 20)
        _, out2, _ = eng.window(1.5, -20, 20)
        assert np.shares_memory(out1.value, out2.value)
