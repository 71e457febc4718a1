import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sympower.errors import CorruptHeader, DegenerateStd, EmptySignal, MissingSamples, NonFinite
from sympower.tensor import (Signal, compute_stats, quantile, range_metric,
                             read_tensor, skewness_metric, tensor_from_bytes, tensor_to_bytes,
                             write_tensor)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(2, 200), elements=finite)


def lognormal_skew(sigma):
    e = math.exp(sigma * sigma)
    return (e + 2.0) * math.sqrt(e - 1.0)


class TestSignal:
    def test_shape_must_match(self):
        with pytest.raises(ValueError):
            Signal(np.zeros(5), (2, 2))

    def test_rejects_non_finite(self):
        with pytest.raises(NonFinite):
            Signal(np.array([0.0, np.nan]), (2,))

    def test_data_is_read_only(self):
        s = Signal.from_array(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            s.data[0] = 1.0
        assert s.array.shape == (2, 3)


class TestComputeStats:
    def test_symmetric_triplet(self):
        st_ = compute_stats(Signal(np.array([-1.0, 0.0, 1.0]), (3,)))
        assert st_.skewness == 0.0
        assert (st_.min, st_.max) == (-1.0, 1.0)

    def test_constant_signal(self):
        st_ = compute_stats(Signal(np.full(10, 0.3), (10,)))
        assert st_.min == st_.max == 0.3
        assert st_.skewness == 0.0
        assert np.count_nonzero(st_.histogram) == 1

    def test_empty(self):
        with pytest.raises(EmptySignal):
            compute_stats(np.array([]))

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            compute_stats(np.array([1.0, np.inf]))

    def test_lognormal_skewness_monte_carlo(self):
        x = np.random.default_rng(7).lognormal(0.0, 0.5, size=10 ** 6)
        assert lognormal_skew(0.5) == pytest.approx(1.7502, abs=1e-4)
        assert compute_stats(x, keep_sorted=False).skewness == pytest.approx(lognormal_skew(0.5), abs=0.05)

    def test_fixed_range_histogram(self):
        st_ = compute_stats(np.array([0.0, 0.5, 1.0, 1.0]), bins=4, value_range=(0, 1))
        np.testing.assert_allclose(st_.histogram, [0.25, 0.0, 0.25, 0.5])

    @given(samples)
    def test_histogram_mass_conserved(self, x):
        assert compute_stats(x, bins=37).histogram.sum() == pytest.approx(1.0, abs=1e-9)

    @given(samples)
    def test_mean_within_bounds(self, x):
        st_ = compute_stats(x)
        assert st_.min <= st_.mean <= st_.max


class TestSkewness:
    @given(samples)
    def test_sign_flips_under_negation(self, x):
        if np.ptp(x) < 1e-6:
            return
        assert skewness_metric(-x) == pytest.approx(-skewness_metric(x), abs=1e-9)

    @given(samples, st.floats(0.01, 100), st.floats(-100, 100))
    def test_affine_invariance(self, x, c, d):
        if np.ptp(x) < 1e-3 * max(1.0, np.abs(x).max()):
            return
        assert skewness_metric(c * x + d) == pytest.approx(skewness_metric(x), abs=1e-9)

    @given(arrays(np.float64, st.integers(1, 100), elements=finite))
    def test_symmetric_set_is_zero(self, x):
        sym = np.concatenate([x, -x])
        if np.ptp(sym) == 0:
            return
        assert abs(skewness_metric(sym)) < 1e-9

    def test_degenerate_reports_zero_with_warning(self):
        with pytest.warns(DegenerateStd):
            assert skewness_metric(np.full(4, 2.0)) == 0.0


class TestQuantile:
    def test_two_point_midpoint(self):
        assert quantile(compute_stats(np.array([1.0, 0.0])), 0.5) == 0.5

    def test_uniform_grid(self):
        grid = np.linspace(0, 1, 1000)
        st_ = compute_stats(grid)
        brute = sorted(grid)[round(0.25 * 999)]
        assert quantile(st_, 0.25) == pytest.approx(0.25, abs=1e-3)
        assert quantile(st_, 0.25) == pytest.approx(brute, abs=1e-3)

    def test_matches_numpy_linear(self):
        x = np.random.default_rng(0).normal(size=101)
        st_ = compute_stats(x)
        for lam in np.linspace(0.01, 0.99, 17):
            assert quantile(st_, lam) == pytest.approx(np.quantile(x, lam), abs=1e-12)

    def test_missing_samples(self):
        with pytest.raises(MissingSamples):
            quantile(compute_stats(np.arange(4.0), keep_sorted=False), 0.5)

    @given(arrays(np.float64, st.integers(1, 100), elements=finite), finite)
    def test_median_of_symmetric_data(self, x, m):
        data = np.concatenate([m + x, m - x])
        assert quantile(compute_stats(data), 0.5) == pytest.approx(m, abs=1e-9)

    @given(samples, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_lambda(self, x, l1, l2):
        st_ = compute_stats(x)
        lo, hi = sorted((l1, l2))
        assert quantile(st_, lo) <= quantile(st_, hi)

    @settings(max_examples=50)
    @given(arrays(np.float64, st.integers(2, 300), elements=st.floats(0, 1)))
    def test_cdf_consistency(self, x):
        st_ = compute_stats(x)
        n = x.size
        for v in x[:20]:
            F = np.mean(x <= v)
            q = quantile(st_, F)
            assert abs(np.mean(x <= q) - F) <= 1.0 / n + 1e-12


class TestRange:
    def test_full_span(self):
        assert range_metric(np.array([-1.0, 0.3, 1.0]), -1, 1) == 1.0

    def test_half_span(self):
        assert range_metric(np.array([-0.5, 0.5]), -1, 1) == 0.5


class TestTensorContainer:
    def test_layout_is_bit_exact(self):
        s = Signal(np.array([1.0, -2.0]), (1, 2))
        buf = tensor_to_bytes(s)
        assert buf[:4] == b"SPT1"
        assert buf[4] == 2
        assert buf[5:21] == (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
        assert np.frombuffer(buf[21:], "<f8").tolist() == [1.0, -2.0]

    def test_round_trip(self, tmp_path):
        s = Signal.from_array(np.random.default_rng(1).normal(size=(3, 4, 2)))
        write_tensor(s, tmp_path / "x.spt")
        back = read_tensor(tmp_path / "x.spt")
        assert back.shape == s.shape
        np.testing.assert_array_equal(back.data, s.data)

    def test_truncated(self):
        buf = tensor_to_bytes(Signal(np.arange(4.0), (4,)))
        with pytest.raises(CorruptHeader):
            tensor_from_bytes(buf[:-3])
        with pytest.raises(CorruptHeader):
            tensor_from_bytes(b"XXXX" + buf[4:])


def test_normalized_natural_image_skew_and_range():
    from sympower import transforms as tf
    from sympower.dataio import bundled_image
    t, _ = tf.apply(bundled_image("coins"), tf.NORM01)
    assert skewness_metric(t) == pytest.approx(0.31, abs=0.15)
    assert range_metric(t, -1, 1) == 0.5
