import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rffcomm.errors import ParameterError
from rffcomm.vlc import (
    LinkGeometry,
    RappModel,
    channel_llrs,
    lambertian_gain,
    mean_signal_power,
    noise_std_for_snr,
    rapp,
    transmit,
)

LED = RappModel(v_sat=0.4, p=2.0, memory_alpha=0.2)


class TestRapp:
    def test_origin(self):
        assert rapp(LED, 0.0) == 0.0

    def test_saturation_limit(self):
        assert rapp(LED, 1e12) == pytest.approx(0.4, rel=1e-12)
        assert rapp(LED, 1e300) == pytest.approx(0.4, rel=1e-12)

    def test_knee_value(self):
        assert rapp(LED, 0.4) == pytest.approx(0.4 / 2 ** 0.25, rel=1e-15)
        assert rapp(LED, 0.4) == pytest.approx(0.33635856610148585, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1e6, 1e6), st.floats(1e-3, 10), st.floats(0.2, 8))
    def test_bounded_and_odd(self, v, v_sat, p):
        m = RappModel(v_sat, p, 0.0)
        out = rapp(m, v)
        assert abs(out) <= min(abs(v), v_sat) * (1 + 1e-12)
        assert rapp(m, -v) == -out

    def test_monotone(self):
        v = np.linspace(-5, 5, 2001)
        assert np.all(np.diff(rapp(LED, v)) >= 0)

    @pytest.mark.parametrize("kwargs", [{"v_sat": 0.0}, {"p": -1.0}, {"memory_alpha": 1.0}, {"memory_alpha": -0.1}])
    def test_invalid_model(self, kwargs):
        with pytest.raises(ParameterError):
            RappModel(**kwargs)


class TestLambertian:
    def test_reference_value(self):
        assert lambertian_gain(LinkGeometry(1, 2.0, 0, 0, 1e-4)) == pytest.approx(2 / (2 * math.pi * 4) * 1e-4, rel=1e-12)
        assert lambertian_gain(LinkGeometry(1, 2.0, 0, 0, 1e-4)) == pytest.approx(7.9577e-6, rel=1e-4)

    def test_inverse_square(self):
        near = lambertian_gain(LinkGeometry(distance=1.5, irradiance_angle=0.3, incidence_angle=0.2))
        far = lambertian_gain(LinkGeometry(distance=3.0, irradiance_angle=0.3, incidence_angle=0.2))
        assert near / far == pytest.approx(4.0, rel=1e-14)

    def test_outside_field_of_view(self):
        assert lambertian_gain(LinkGeometry(incidence_angle=0.8, field_of_view=0.5)) == 0.0

    def test_bad_distance(self):
        with pytest.raises(ParameterError):
            lambertian_gain(LinkGeometry(distance=0.0))


class TestTransmit:
    def test_linear_regime_is_identity(self):
        bits = np.random.default_rng(0).integers(0, 2, 64)
        y = transmit(bits, RappModel(v_sat=1e9, memory_alpha=0.0), 1.0, 0.0)
        np.testing.assert_allclose(y, 2.0 * bits - 1.0, rtol=1e-12)

    def test_memory_depth_one(self):
        bits = np.random.default_rng(1).integers(0, 2, 50)
        base = transmit(bits, LED, 1.0, 0.0)
        flipped = bits.copy()
        flipped[20] ^= 1
        diff = np.flatnonzero(transmit(flipped, LED, 1.0, 0.0) != base)
        assert set(diff) == {20, 21}

    def test_first_symbol_has_zero_predecessor(self):
        y = transmit(np.array([1, 1]), LED, 1.0, 0.0)
        assert y[0] == pytest.approx(rapp(LED, 1.0))
        assert y[1] == pytest.approx(rapp(LED, 1.2))

    def test_saturation_bound(self):
        bits = np.random.default_rng(2).integers(0, 2, 1000)
        assert np.all(np.abs(transmit(bits, LED, 0.7, 0.0, backoff=5.0)) <= 0.7 * 0.4)

    def test_seeded_noise_repeatable(self):
        bits = np.random.default_rng(3).integers(0, 2, 100)
        assert np.array_equal(transmit(bits, LED, 1.0, 0.3, seed=5), transmit(bits, LED, 1.0, 0.3, seed=5))

    def test_noise_calibration(self):
        bits = np.random.default_rng(4).integers(0, 2, 100_000)
        sigma = 0.25
        resid = transmit(bits, LED, 1.0, sigma, seed=6) - transmit(bits, LED, 1.0, 0.0)
        se = sigma**2 * math.sqrt(2.0 / resid.size)
        assert abs(resid.var() - sigma**2) < 3 * se

    def test_rows_are_independent_words(self):
        bits = np.random.default_rng(5).integers(0, 2, (3, 10))
        y = transmit(bits, LED, 1.0, 0.0)
        for k in range(3):
            np.testing.assert_array_equal(y[k], transmit(bits[k], LED, 1.0, 0.0))

    def test_bad_bits(self):
        with pytest.raises(ParameterError):
            transmit(np.array([0, 2]), LED, 1.0, 0.1)


class TestLinkBudget:
    def test_snr_definition(self):
        sigma = noise_std_for_snr(3.0, LED, h=0.5)
        assert 0.25 * mean_signal_power(LED) / sigma**2 == pytest.approx(10 ** 0.3)

    def test_signal_power_matches_simulation(self):
        bits = np.random.default_rng(7).integers(0, 2, 200_000)
        y = transmit(bits, LED, 1.0, 0.0)
        assert np.mean(y[1:] ** 2) == pytest.approx(mean_signal_power(LED), rel=5e-3)

    def test_llr_sign_convention(self):
        llr = channel_llrs(np.array([-0.5, 0.5, 1e6]), 0.1)
        assert llr[0] > 0 and llr[1] < 0 and llr[2] == -50.0
