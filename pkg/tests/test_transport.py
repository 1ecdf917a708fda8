import numpy as np
import pytest

from spfl import channel as ch
from spfl.quantizer import decode, quantize
from spfl.transport import PacketOutcome, effective_sign_probability, reconstruct, transmit, transmit_physical


def freq(q, p, trials, limit=0, seed=0):
    rng = np.random.default_rng(seed)
    out = [transmit(q, p, rng, limit) for _ in range(trials)]
    return np.array([o.sign_ok for o in out]), np.array([o.modulus_ok for o in out]), out


class TestTransmit:
    def test_certain(self):
        o = transmit(1.0, 1.0, np.random.default_rng(0))
        assert o.sign_ok and o.modulus_ok and o.retransmissions_used == 0

    def test_impossible(self):
        s, _, _ = freq(0.0, 0.5, 1000)
        assert not s.any()

    def test_bernoulli_frequency(self):
        s, m, _ = freq(0.7, 0.4, 10 ** 5)
        assert abs(s.mean() - 0.7) <= 3 * np.sqrt(0.21 / 1e5)
        assert abs(m.mean() - 0.4) <= 3 * np.sqrt(0.24 / 1e5)

    def test_retransmission_raises_delivery(self):
        rates = [freq(0.5, 0.5, 10 ** 5, limit, seed=limit)[0].mean() for limit in range(4)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        for limit, r in enumerate(rates):
            e = effective_sign_probability(0.5, limit)
            assert abs(r - e) <= 3 * np.sqrt(e * (1 - e) / 1e5)

    def test_retransmissions_counted(self):
        _, _, out = freq(0.5, 0.5, 2000, limit=2)
        used = np.array([o.retransmissions_used for o in out])
        assert used.max() == 2 and used.min() == 0
        assert all(o.q_used == 0.875 for o in out)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            transmit(1.2, 0.5, np.random.default_rng(0))


class TestPhysical:
    def test_matches_capacity_rule(self):
        p = ch.params_for(2, bandwidth_hz=1e5, model_dim=210, latency_s=0.01, distances_m=[300, 500],
                          tx_power_dbm=-10)
        for gain in (0.01, 0.5, 3.0):
            o = transmit_physical(0.6, 0.4, gain, p, 1, np.random.default_rng(0))
            assert o.sign_ok == bool(ch.sign_capacity(0.6, 0.4, gain, p, 1) >= p.sign_rate)
            assert o.modulus_ok == bool(ch.modulus_capacity(0.6, 0.4, gain, p, 1) >= p.modulus_rate)


class TestReconstruct:
    def setup_method(self):
        self.g = np.array([0.5, -1.0, 0.25, -0.1])
        self.q = quantize(self.g, 3, np.random.default_rng(0))
        self.comp = np.array([0.3, 0.3, 0.2, 0.1])

    def outcome(self, s, m):
        return PacketOutcome(s, m, 0, 1.0, 1.0)

    def test_full(self):
        np.testing.assert_array_equal(reconstruct(self.outcome(True, True), self.q, self.comp), decode(self.q))

    def test_compensated(self):
        r = reconstruct(self.outcome(True, False), self.q, self.comp)
        np.testing.assert_array_equal(r, np.sign(self.g) * self.comp)

    def test_rejected_even_with_modulus(self):
        assert reconstruct(self.outcome(False, True), self.q, self.comp) is None
        assert reconstruct(self.outcome(False, False), self.q, self.comp) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct(self.outcome(True, False), self.q, np.ones(3))

    def test_negative_compensation(self):
        with pytest.raises(ValueError):
            reconstruct(self.outcome(True, False), self.q, -self.comp)
