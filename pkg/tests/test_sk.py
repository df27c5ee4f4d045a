import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedbacksk import pam
from feedbacksk.channel import ChannelPair
from feedbacksk.errors import ConfigurationError
from feedbacksk.numerics import RandomSource, q_func
from feedbacksk.sim import run_block
from feedbacksk.sk import (
    SkParams,
    SplitStatistic,
    sk_log_ser_prediction,
    sk_run_batch,
    sk_run_naive,
    sk_run_trial,
    sk_schedule,
    sk_ser_prediction,
)


def assert_close_per_round(actual, expected, rel):
    """Errors agree to ``rel`` relative to each round's error scale."""
    scale = np.abs(expected).max(axis=0)
    assert np.all(np.abs(actual - expected) <= rel * scale)


def forward_noise(seed, batch, n):
    width = 4 * math.ceil(batch * n / 4)
    return RandomSource(seed, 0, width=width).normal(batch * n).reshape(batch, n)


def labels_for(seed, batch, k):
    return RandomSource(seed, 1, width=4 * math.ceil(batch / 4)).words(batch) >> np.uint64(64 - k)


class TestParams:
    def test_from_db(self):
        p = SkParams.from_snr_db(15, 5, 0.0)
        assert p.snr == pytest.approx(1.0)
        assert p.rate == pytest.approx(1 / 3)

    @pytest.mark.parametrize("kwargs", [dict(n_rounds=0, k_bits=3), dict(n_rounds=3, k_bits=0),
                                        dict(n_rounds=3, k_bits=3, sigma2_ff=0.0),
                                        dict(n_rounds=3, k_bits=3, p_ff=-1.0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            SkParams(**kwargs)


class TestSchedule:
    def test_unit_snr_halves_variance(self):
        s = sk_schedule(SkParams(4, 2))
        np.testing.assert_allclose(s.sigma2_eps, [1.0, 0.5, 0.25, 0.125], rtol=1e-15)
        np.testing.assert_allclose(s.gain, [1.0, math.sqrt(2), 2.0], rtol=1e-15)
        # c_n = g_n sigma^2_n / (P + sigma^2) = sigma_n / 2 at P = sigma^2 = 1
        np.testing.assert_allclose(s.mmse_coef, [0.5, 0.5 / math.sqrt(2), 0.25], rtol=1e-15)

    def test_effective_snr_unit_snr(self):
        s = sk_schedule(SkParams(39, 13))
        assert s.log_effective_snr == pytest.approx(38 * math.log(2), rel=1e-14)

    @given(st.integers(1, 200), st.floats(-10, 30))
    @settings(max_examples=60)
    def test_closed_form(self, n, snr_db):
        p = SkParams.from_snr_db(n, 8, snr_db)
        s = sk_schedule(p)
        snr = p.snr
        expected = -math.log(snr) - np.arange(n) * math.log1p(snr)
        np.testing.assert_allclose(s.log_sigma2_eps, expected, rtol=1e-12, atol=1e-12)
        assert np.all(np.diff(s.log_sigma2_eps) < 0)

    def test_nonunit_power(self):
        p = SkParams(3, 2, p_ff=4.0, sigma2_ff=2.0)
        s = sk_schedule(p)
        np.testing.assert_allclose(s.sigma2_eps, [0.5, 0.5 / 3, 0.5 / 9], rtol=1e-14)
        np.testing.assert_allclose(s.gain, 2.0 / np.sqrt(s.sigma2_eps[:-1]), rtol=1e-14)
        np.testing.assert_allclose(s.mmse_coef, s.gain * s.sigma2_eps[:-1] / 6.0, rtol=1e-14)

    def test_finite_at_extreme_length(self):
        s = sk_schedule(SkParams.from_snr_db(150, 50, -2.13))
        assert np.all(np.isfinite(s.gain)) and np.all(np.isfinite(s.mmse_coef))
        assert np.all(s.mmse_coef > 0)


class TestPrediction:
    def test_matches_closed_form(self):
        p = SkParams.from_snr_db(3, 4, 3.0)
        eff = p.snr * (1 + p.snr) ** 2
        expected = 2 * (1 - 1 / 16) * q_func(math.sqrt(3 / 255) * math.sqrt(eff))
        assert sk_ser_prediction(p) == pytest.approx(expected, rel=1e-12)

    def test_log_form_beyond_underflow(self):
        p = SkParams.from_snr_db(39, 13, 10.0)
        assert sk_ser_prediction(p) == 0.0
        assert sk_log_ser_prediction(p) < -745

    def test_monotone_in_snr(self):
        vals = [sk_log_ser_prediction(SkParams.from_snr_db(150, 50, db)) for db in np.linspace(-2.5, -1.5, 11)]
        assert np.all(np.diff(vals) < 0)


class TestSplitStatistic:
    @pytest.mark.parametrize("k", [1, 3, 8])
    def test_points_round_trip(self, k):
        c = pam.build_constellation(k)
        idx = np.arange(c.m_points)
        s = SplitStatistic.from_value(c.point(idx), c)
        np.testing.assert_array_equal(s.decide(), idx)
        np.testing.assert_allclose(s.error(idx), 0.0, atol=1e-12)
        np.testing.assert_allclose(s.value(), c.point(idx), atol=1e-12)

    @given(st.floats(-3, 3))
    def test_fine_range(self, x):
        c = pam.build_constellation(4)
        s = SplitStatistic.from_value(np.array([x]), c)
        assert -0.5 <= s.fine[0] < 0.5
        assert s.value()[0] == pytest.approx(x, abs=1e-12)

    def test_add_carries_into_coarse(self):
        c = pam.build_constellation(3)
        s = SplitStatistic(np.array([3]), np.array([0.25]), c)
        s.add(np.array([1.5]))
        assert s.coarse[0] == 5 and s.fine[0] == pytest.approx(-0.25)

    def test_decision_matches_slicer(self):
        c = pam.build_constellation(5)
        x = np.linspace(-2, 2, 10_001)
        np.testing.assert_array_equal(SplitStatistic.from_value(x, c).decide(), pam.slice_index(x, c))


class TestRun:
    def test_rejects_noisy_feedback(self):
        p = SkParams(3, 2)
        ch = ChannelPair(1.0, 0.5, forward_noise(1, 4, 3), forward_noise(2, 4, 2))
        with pytest.raises(ConfigurationError):
            sk_run_batch(p, np.zeros(4, dtype=np.uint64), ch)

    def test_noiseless_forward_decodes(self):
        p = SkParams(5, 6, sigma2_ff=1.0)
        ch = ChannelPair(0.0, 0.0, np.zeros((64, 5)))
        labels = np.arange(64, dtype=np.uint64)
        out = sk_run_batch(p, labels, ch)
        np.testing.assert_array_equal(out.decoded, labels)

    @pytest.mark.parametrize("k", [5, 20, 30])
    def test_split_matches_naive(self, k):
        n, batch = 15, 2000
        p = SkParams.from_snr_db(n, k, 0.0)
        z = forward_noise(3, batch, n)
        labels = labels_for(4, batch, k)
        split = sk_run_batch(p, labels, ChannelPair(p.sigma2_ff, 0.0, z), record=True)
        naive = sk_run_naive(p, labels, ChannelPair(p.sigma2_ff, 0.0, z))
        theta = p.constellation.point(pam.gray_to_binary(labels))
        err_naive = naive - theta[:, None]
        assert_close_per_round(split.eps_trajectory, err_naive, 1e-9)

    def test_trial_interface(self):
        p = SkParams.from_snr_db(4, 3, 20.0)
        ch = ChannelPair(p.sigma2_ff, 0.0, forward_noise(5, 1, 4))
        out = sk_run_trial(p, [1, 0, 1], ch)
        assert out.eps_trajectory.shape == (4,)
        assert out.bit_errors == 0 and not out.symbol_error
        with pytest.raises(ConfigurationError):
            sk_run_trial(p, [1, 0], ch)

    def test_forward_power_and_variances(self):
        p = SkParams.from_snr_db(15, 5, 0.0)
        out = run_block("sk", p, seed=21, first=0, count=40_000)
        assert out.audit.power_ff == pytest.approx(p.p_ff, rel=0.02)
        ratio = out.rounds.eps_variance_ratio
        assert np.all(np.abs(ratio - 1) < 4 * math.sqrt(2 / 40_000))

    def test_ser_near_prediction(self):
        p = SkParams.from_snr_db(3, 4, 3.0)
        count = 100_000
        out = run_block("sk", p, seed=8, first=0, count=count)
        ser = out.symbol_errors.mean()
        pred = sk_ser_prediction(p)
        assert abs(ser - pred) < 4 * math.sqrt(pred * (1 - pred) / count)

    def test_ser_falls_with_rounds(self):
        sers = [run_block("sk", SkParams.from_snr_db(n, 6, 0.0), 5, 0, 30_000).symbol_errors.mean()
                for n in (2, 4, 6)]
        assert sers[0] > sers[1] > sers[2]
