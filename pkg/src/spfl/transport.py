"""Sign/modulus packet delivery with CRC-gated acceptance and sign retransmission."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channel as ch
from .quantizer import QuantizedGradient, knob_values


@dataclass(frozen=True)
class PacketOutcome:
    sign_ok: bool
    modulus_ok: bool
    retransmissions_used: int
    q_used: float
    p_used: float

    @property
    def accepted(self) -> bool:
        return self.sign_ok


def effective_sign_probability(q: float, retransmit_limit: int) -> float:
    """Probability the sign packet gets through within ``1 + retransmit_limit`` tries."""
    return 1.0 - (1.0 - q) ** (retransmit_limit + 1)


def transmit(q: float, p: float, rng: np.random.Generator, retransmit_limit: int = 0) -> PacketOutcome:
    """Bernoulli delivery against the closed-form success probabilities.

    Sign and modulus packets fail independently.  A failed sign packet is
    resent up to ``retransmit_limit`` times; the modulus packet is sent once.
    """
    if not (0.0 <= q <= 1.0 and 0.0 <= p <= 1.0):
        raise ValueError(f"probabilities must lie in [0, 1], got q={q}, p={p}")
    if retransmit_limit < 0:
        raise ValueError("retransmit_limit must be nonnegative")
    sign_ok = bool(rng.random() < q)
    used = 0
    while not sign_ok and used < retransmit_limit:
        used += 1
        sign_ok = bool(rng.random() < q)
    modulus_ok = bool(rng.random() < p)
    return PacketOutcome(sign_ok, modulus_ok, used, effective_sign_probability(q, retransmit_limit), p)


def transmit_physical(alpha: float, beta: float, gain_sq: float, params: ch.ChannelParams, device: int,
                      rng: np.random.Generator, retransmit_limit: int = 0) -> PacketOutcome:
    """Delivery decided by comparing instantaneous capacity with the required rate.

    Both packets see the same fading draw, so their failures are positively
    correlated.  Sign retransmissions happen in fresh slots with new draws.
    """
    sign_ok = bool(ch.sign_capacity(alpha, beta, gain_sq, params, device) >= params.sign_rate)
    used = 0
    while not sign_ok and used < retransmit_limit:
        used += 1
        redraw = rng.standard_exponential()
        sign_ok = bool(ch.sign_capacity(alpha, beta, redraw, params, device) >= params.sign_rate)
    modulus_ok = bool(ch.modulus_capacity(alpha, beta, gain_sq, params, device) >= params.modulus_rate)
    q = ch.q_sign(alpha, beta, params, device)
    p = ch.p_modulus(alpha, beta, params, device)
    return PacketOutcome(sign_ok, modulus_ok, used, effective_sign_probability(q, retransmit_limit), p)


def reconstruct(outcome: PacketOutcome, q: QuantizedGradient, compensation) -> Optional[np.ndarray]:
    """What the server rebuilds from one device, or ``None`` if it is rejected.

    A bad sign packet rejects the device outright.  With good signs and a bad
    modulus packet, the compensation moduli stand in for the lost ones.
    """
    comp = np.asarray(compensation, dtype=float)
    if comp.shape != q.signs.shape:
        raise ValueError(f"compensation has shape {comp.shape}, expected {q.signs.shape}")
    if np.any(comp < 0):
        raise ValueError("compensation moduli must be nonnegative")
    if not outcome.sign_ok:
        return None
    if outcome.modulus_ok:
        return q.signs * knob_values(q)
    return q.signs * comp
