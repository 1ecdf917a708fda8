import numpy as np
import pytest

from spfl import channel as ch

# Frozen from a 40-digit mpmath evaluation of the outage exponent (independent of this package)
H_S_REF = -9.845214519270192955829825e-07
H_V_REF = -4.275277793068413021301221e-06


def ref_params(**kw):
    base = dict(bandwidth_total_hz=10e6, noise_psd_w_per_hz=10 ** -20.4, pathloss_exponent=3.0,
                distances_m=[100.0], tx_power_w=[10 ** -0.7 / 1000], latency_s=0.5, model_dim=60000,
                quant_bits=3, range_bits=64)
    base.update(kw)
    return ch.ChannelParams(**base)


def harsh(num_devices=3):
    return ch.params_for(num_devices, bandwidth_hz=1e5, model_dim=210, latency_s=0.01,
                         distances_m=np.linspace(200, 600, num_devices), tx_power_dbm=-10)


class TestParams:
    def test_rates(self):
        p = ref_params()
        assert p.sign_rate == 60000 / 0.5
        assert p.modulus_rate == (60000 * 3 + 64) / 0.5

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ref_params(latency_s=0.0)
        with pytest.raises(ValueError):
            ref_params(distances_m=[-1.0])

    def test_dbm_roundtrip(self):
        np.testing.assert_allclose(ch.dbm_to_watts(30.0), 1.0)
        np.testing.assert_allclose(ch.watts_to_dbm(ch.dbm_to_watts(-4.0)), -4.0)


class TestExponents:
    def test_reference_values(self):
        p = ref_params()
        np.testing.assert_allclose(ch.h_s(0.05, p), H_S_REF, rtol=1e-12)
        np.testing.assert_allclose(ch.h_v(0.05, p), H_V_REF, rtol=1e-12)

    def test_ordering_on_grid(self):
        p = harsh()
        beta = np.linspace(1e-3, 0.999, 500)
        for k in range(3):
            hs = ch.h_s(beta, p, k)
            hv = ch.h_v(beta, p, k)
            assert np.all(hs <= 0)
            assert np.all(hv <= hs)

    def test_blows_up_near_zero(self):
        p = ref_params()
        assert ch.h_s(1e-6, p)[0] < -1e6

    def test_equal_rates_give_equal_exponents(self):
        p = ref_params(quant_bits=1, range_bits=0)
        np.testing.assert_allclose(ch.h_v(0.05, p), ch.h_s(0.05, p), rtol=1e-15)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.2])
    def test_domain(self, beta):
        with pytest.raises(ch.DomainError):
            ch.h_s(beta, ref_params())

    def test_derivatives_match_finite_differences(self):
        p = harsh()
        for beta in (0.05, 0.2, 0.6):
            h, d1, d2 = ch.h_v_derivs(beta, p, 1)
            e = 1e-6
            fd1 = (ch.h_v(beta + e, p, 1) - ch.h_v(beta - e, p, 1)) / (2 * e)
            fd2 = (ch.h_v(beta + e, p, 1) - 2 * h + ch.h_v(beta - e, p, 1)) / e ** 2
            np.testing.assert_allclose(d1, fd1, rtol=1e-6)
            np.testing.assert_allclose(d2, fd2, rtol=1e-3)


class TestProbabilities:
    def test_branches(self):
        p = harsh()
        assert ch.q_sign(0.0, 0.3, p, 0) == 0.0
        assert ch.p_modulus(1.0, 0.3, p, 0) == 0.0
        np.testing.assert_allclose(ch.q_sign(1.0, 0.3, p, 0), np.exp(ch.h_s(0.3, p, 0)))
        np.testing.assert_allclose(ch.p_modulus(0.0, 0.3, p, 0), np.exp(ch.h_v(0.3, p, 0)))

    def test_monotone_in_alpha(self):
        p = harsh()
        alpha = np.linspace(0, 1, 1000)
        q = ch.q_sign(alpha, 0.2, p, 2)
        pm = ch.p_modulus(alpha, 0.2, p, 2)
        assert np.all((q >= 0) & (q <= 1) & (pm >= 0) & (pm <= 1))
        assert np.all(np.diff(q) >= 0)
        assert np.all(np.diff(pm) <= 0)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ch.DomainError):
            ch.q_sign(1.5, 0.2, harsh(), 0)

    def test_monte_carlo_agreement(self):
        p = harsh()
        rng = np.random.default_rng(3)
        gain = rng.standard_exponential(10 ** 6)
        alpha, beta = 0.5, 0.3
        for k in range(3):
            q = ch.q_sign(alpha, beta, p, k)
            pm = ch.p_modulus(alpha, beta, p, k)
            q_mc = np.mean(ch.sign_capacity(alpha, beta, gain, p, k) >= p.sign_rate)
            p_mc = np.mean(ch.modulus_capacity(alpha, beta, gain, p, k) >= p.modulus_rate)
            assert abs(q_mc - q) <= 3 * np.sqrt(q * (1 - q) / gain.size) + 1e-12
            assert abs(p_mc - pm) <= 3 * np.sqrt(pm * (1 - pm) / gain.size) + 1e-12

    def test_full_band_success_matches_capacity(self):
        p = harsh()
        rng = np.random.default_rng(4)
        gain = rng.standard_exponential(10 ** 6)
        bits = 3 * 210 + 64
        s = ch.full_band_success(0.3, bits, p, 1)
        mc = np.mean(ch.full_band_capacity(0.3, gain, p, 1) >= bits / p.latency_s)
        assert abs(mc - s) <= 3 * np.sqrt(s * (1 - s) / gain.size)


class TestFading:
    def test_unit_mean(self):
        draw = ch.draw_fading(11, 0, 10 ** 6)
        assert abs(draw.gain_sq.mean() - 1.0) < 0.01
        assert np.all(draw.gain_sq >= 0)

    def test_deterministic_and_round_separated(self):
        a = ch.draw_fading(5, 3, 8)
        b = ch.draw_fading(5, 3, 8)
        c = ch.draw_fading(5, 4, 8)
        np.testing.assert_array_equal(a.gain_sq, b.gain_sq)
        assert not np.array_equal(a.gain_sq, c.gain_sq)

    def test_device_draws_do_not_depend_on_device_count(self):
        few = ch.draw_fading(5, 2, 4).gain_sq
        many = ch.draw_fading(5, 2, 20).gain_sq
        np.testing.assert_array_equal(few, many[:4])
        np.testing.assert_array_equal(ch.draw_fading(5, 2, 3, device_offset=4).gain_sq, many[4:7])
