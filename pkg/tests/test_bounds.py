import math

import numpy as np
import pytest

from feedbacksk import modulo_sk as msk
from feedbacksk.bounds import (
    BoundCurve,
    BoundKind,
    awgn_capacity,
    awgn_dispersion,
    bler_to_ber_lower,
    msk_ser_upper_bound,
    no_feedback_converse_bler,
    union_ser_bound,
)
from feedbacksk.numerics import q_func

# normal-approximation converse at SNR 1 and rate 1/3, evaluated with mpmath at 40 digits
CONVERSE_N150 = 0.004090187028548897
CONVERSE_N39 = 0.04874834594214780


class TestCapacity:
    def test_values(self):
        assert awgn_capacity(0.0) == 0.0
        assert awgn_capacity(1.0) == 0.5
        assert awgn_capacity(3.0) == 1.0

    def test_dispersion_unit_snr(self):
        # V = 3/8 nats^2 at SNR 1
        assert awgn_dispersion(1.0) == pytest.approx(0.375 / math.log(2) ** 2, rel=1e-14)

    def test_negative(self):
        with pytest.raises(ValueError):
            awgn_capacity(-1.0)


class TestConverse:
    @pytest.mark.parametrize("n, expected", [(150, CONVERSE_N150), (39, CONVERSE_N39)])
    def test_oracle(self, n, expected):
        assert no_feedback_converse_bler(n, 1 / 3, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_ber_lower(self):
        assert bler_to_ber_lower(CONVERSE_N39, 13) == pytest.approx(3.74987e-3, rel=1e-5)
        assert bler_to_ber_lower(CONVERSE_N150, 50) == pytest.approx(8.1804e-5, rel=1e-4)
        with pytest.raises(ValueError):
            bler_to_ber_lower(0.1, 0)

    def test_decreasing_in_snr_and_blocklength(self):
        snrs = np.logspace(-0.2, 0.3, 20)
        vals = [no_feedback_converse_bler(39, 1 / 3, s) for s in snrs]
        assert np.all(np.diff(vals) < 0)
        assert no_feedback_converse_bler(150, 1 / 3, 1.0) < no_feedback_converse_bler(39, 1 / 3, 1.0)

    def test_rate_above_capacity_is_large(self):
        assert no_feedback_converse_bler(1000, 0.6, 1.0) > 0.99

    def test_domain(self):
        with pytest.raises(ValueError):
            no_feedback_converse_bler(0, 0.3, 1.0)


class TestUnionBound:
    def test_adds_terms(self):
        k = 3
        log_s2 = math.log(0.01)
        slicing = 2 * (1 - 1 / 8) * q_func(math.sqrt(3 / 63) / 0.1)
        assert union_ser_bound(k, log_s2, [1e-4, 2e-4]) == pytest.approx(3e-4 + slicing, rel=1e-12)

    def test_capped(self):
        assert union_ser_bound(4, 0.0, [0.7, 0.6]) == 1.0

    def test_msk_bound_decreases_with_feedback_snr(self):
        vals = []
        for fb in (14.0, 16.0, 18.0, 20.0):
            p = msk.ModuloSkParams.from_snr_db(39, 13, 0.0, fb, kappa=4.5)
            vals.append(msk_ser_upper_bound(p, msk.modulo_sk_schedule(p)))
        # at fixed kappa the bound flattens onto the fold terms (N-1) 2Q(kappa)
        assert np.all(np.diff(vals) <= 1e-15) and vals[0] > vals[1]
        assert vals[-1] == pytest.approx(38 * 2 * q_func(4.5), rel=1e-6)

    def test_msk_bound_explicit_terms(self):
        p = msk.ModuloSkParams.from_snr_db(4, 2, 0.0, 20.0, kappa=4.0)
        s = msk.modulo_sk_schedule(p)
        # every fold term equals 2Q(kappa) by construction
        expected = union_ser_bound(2, s.log_sigma2_eps[-1], [2 * q_func(4.0)] * 3)
        assert msk_ser_upper_bound(p, s) == pytest.approx(expected, rel=1e-12)


class TestBoundCurve:
    def test_length_check(self):
        with pytest.raises(ValueError):
            BoundCurve(BoundKind.PREDICTION_SK, (1.0, 2.0), (0.1,))

    def test_probability_check(self):
        with pytest.raises(ValueError):
            BoundCurve(BoundKind.UPPER_BOUND_MSK, (1.0,), (1.5,))
        BoundCurve(BoundKind.CAPACITY_THRESHOLD, (1.0,), (1.5,))


class TestAutoKappaBoundShape:
    """Bound after the margin search, over the sweep ranges used by the CLI."""

    @staticmethod
    def bound(n, fwd, fb):
        return msk.choose_kappa(msk.ModuloSkParams.from_snr_db(n, n // 3, fwd, fb))[1]

    def test_nonincreasing_in_feedback_snr(self):
        vals = [self.bound(39, 0.0, fb) for fb in np.arange(10.0, 20.01, 0.5)]
        assert np.all(np.diff(vals) <= 0)

    @pytest.mark.parametrize("n", [15, 39, 150])
    def test_nonincreasing_in_forward_snr(self, n):
        vals = np.array([self.bound(n, f, 27.0) for f in np.arange(-1.0, 2.01, 0.25)])
        assert np.all(vals[1:] <= vals[:-1] * (1 + 1e-12))

    def test_growth_in_rounds_is_the_fold_floor(self):
        # with the margin capped at the top of the grid, every extra round adds 2Q(6.5)
        b39, b150 = self.bound(39, 0.0, 27.0), self.bound(150, 0.0, 27.0)
        assert b150 > b39
        assert b150 == pytest.approx(149 * 2 * q_func(msk.KAPPA_GRID[-1]), rel=1e-6)
        assert self.bound(39, 0.0, 16.0) < self.bound(15, 0.0, 16.0)
