"""Rayleigh block-fading uplink: rates, outage exponents and success probabilities.

Each device splits its bandwidth share ``beta * B`` equally between a sign
packet (``l`` bits) and a modulus packet (``l*b + b0`` bits) and splits its
transmit power as ``alpha`` / ``1 - alpha``.  A packet fails when the
instantaneous capacity of its half-band falls below the rate needed to push
the payload through within the latency budget ``tau``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import rng as _rng

DeviceIndex = Union[int, np.ndarray, None]


class DomainError(ValueError):
    """Argument outside the domain where a channel quantity is defined."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class ChannelParams:
    """Static wireless constants.  Powers and noise PSD are linear (W, W/Hz)."""

    bandwidth_total_hz: float
    noise_psd_w_per_hz: float
    pathloss_exponent: float
    distances_m: np.ndarray
    tx_power_w: np.ndarray
    latency_s: float
    model_dim: int
    quant_bits: int
    range_bits: int = 64

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.distances_m, dtype=float))
        p = np.asarray(self.tx_power_w, dtype=float)
        p = np.broadcast_to(p, d.shape).copy() if p.ndim == 0 or p.size == 1 else np.atleast_1d(p)
        if p.shape != d.shape:
            raise ValueError(f"tx_power_w has {p.size} entries for {d.size} devices")
        d.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "distances_m", d)
        object.__setattr__(self, "tx_power_w", p)
        for name in ("bandwidth_total_hz", "noise_psd_w_per_hz", "pathloss_exponent", "latency_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if np.any(d <= 0) or np.any(p <= 0):
            raise ValueError("distances and transmit powers must be positive")
        if int(self.model_dim) < 1 or int(self.quant_bits) < 1 or int(self.range_bits) < 0:
            raise ValueError("model_dim and quant_bits must be >= 1, range_bits >= 0")

    @property
    def num_devices(self) -> int:
        return int(self.distances_m.size)

    @property
    def sign_bits(self) -> int:
        return int(self.model_dim)

    @property
    def modulus_bits(self) -> int:
        return int(self.model_dim) * int(self.quant_bits) + int(self.range_bits)

    @property
    def sign_rate(self) -> float:
        """Required sign-packet rate ``l / tau`` in bit/s."""
        return self.sign_bits / self.latency_s

    @property
    def modulus_rate(self) -> float:
        """Required modulus-packet rate ``(l b + b0) / tau`` in bit/s."""
        return self.modulus_bits / self.latency_s

    @property
    def rx_gain(self) -> np.ndarray:
        """Mean received power per device, ``P d^-zeta`` (W)."""
        return self.tx_power_w * self.distances_m ** (-self.pathloss_exponent)

    def replace(self, **changes) -> "ChannelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class FadingDraw:
    gain_sq: np.ndarray
    round: int


def _select(values: np.ndarray, device: DeviceIndex):
    return values if device is None else values[device]


def _check_beta(beta):
    b = np.asarray(beta, dtype=float)
    if not np.all((b > 0.0) & (b < 1.0)):
        raise DomainError(f"bandwidth share must lie in (0, 1), got {beta!r}")
    return b


def _exponent(beta, scale, a, order: int = 0):
    """``scale * beta * (1 - 2**(a / beta))`` and its beta-derivatives.

    ``a = 2 R / B`` is the spectral efficiency needed on a half band.  Returns
    the value, or (value, first, second) derivatives when ``order == 2``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        u = a * math.log(2.0) / beta
        e = np.exp(u)
        h = scale * beta * (1.0 - e)
        if order == 0:
            return h
        d1 = scale * (1.0 + e * (u - 1.0))  # grouped so overflow gives +inf, not nan
        d2 = -scale * e * u * u / beta
    return h, d1, d2


def _sign_terms(params: ChannelParams, device: DeviceIndex):
    scale = _select(params.bandwidth_total_hz * params.noise_psd_w_per_hz / (4.0 * params.rx_gain), device)
    return scale, 2.0 * params.sign_rate / params.bandwidth_total_hz


def _modulus_terms(params: ChannelParams, device: DeviceIndex):
    scale = _select(params.bandwidth_total_hz * params.noise_psd_w_per_hz / (4.0 * params.rx_gain), device)
    return scale, 2.0 * params.modulus_rate / params.bandwidth_total_hz


def h_s(beta, params: ChannelParams, device: DeviceIndex = None):
    """Sign-packet outage exponent ``H_s(beta) <= 0``; ``q = exp(H_s / alpha)``."""
    b = _check_beta(beta)
    scale, a = _sign_terms(params, device)
    return _exponent(b, scale, a)


def h_v(beta, params: ChannelParams, device: DeviceIndex = None):
    """Modulus-packet outage exponent ``H_v(beta) <= H_s(beta)``."""
    b = _check_beta(beta)
    scale, a = _modulus_terms(params, device)
    return _exponent(b, scale, a)


def h_s_derivs(beta, params: ChannelParams, device: DeviceIndex = None):
    """(H_s, dH_s/dbeta, d2H_s/dbeta2); H_s is concave in beta."""
    scale, a = _sign_terms(params, device)
    return _exponent(_check_beta(beta), scale, a, order=2)


def h_v_derivs(beta, params: ChannelParams, device: DeviceIndex = None):
    scale, a = _modulus_terms(params, device)
    return _exponent(_check_beta(beta), scale, a, order=2)


def q_sign(alpha, beta, params: ChannelParams, device: DeviceIndex = None):
    """Sign-packet success probability; exactly 0 when ``alpha == 0``."""
    al = np.asarray(alpha, dtype=float)
    if np.any((al < 0) | (al > 1)):
        raise DomainError(f"power share must lie in [0, 1], got {alpha!r}")
    hs = h_s(beta, params, device)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(al > 0, np.exp(hs / np.where(al > 0, al, 1.0)), 0.0)
    return out if out.ndim else float(out)


def p_modulus(alpha, beta, params: ChannelParams, device: DeviceIndex = None):
    """Modulus-packet success probability; exactly 0 when ``alpha == 1``."""
    al = np.asarray(alpha, dtype=float)
    if np.any((al < 0) | (al > 1)):
        raise DomainError(f"power share must lie in [0, 1], got {alpha!r}")
    hv = h_v(beta, params, device)
    rest = 1.0 - al
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rest > 0, np.exp(hv / np.where(rest > 0, rest, 1.0)), 0.0)
    return out if out.ndim else float(out)


def _half_band_capacity(power_share, beta, gain_sq, params, device):
    w = np.asarray(beta, dtype=float) * params.bandwidth_total_hz
    # noise N0/4 per Hz over the half band; matches the closed-form exponents
    snr = 4.0 * power_share * _select(params.rx_gain, device) * gain_sq / (w * params.noise_psd_w_per_hz)
    return 0.5 * w * np.log2(1.0 + snr)


def sign_capacity(alpha, beta, gain_sq, params: ChannelParams, device: DeviceIndex = None):
    """Instantaneous sign-packet capacity (bit/s) for a fading draw ``|h|^2``."""
    return _half_band_capacity(np.asarray(alpha, dtype=float), beta, gain_sq, params, device)


def modulus_capacity(alpha, beta, gain_sq, params: ChannelParams, device: DeviceIndex = None):
    return _half_band_capacity(1.0 - np.asarray(alpha, dtype=float), beta, gain_sq, params, device)


def full_band_capacity(beta, gain_sq, params: ChannelParams, device: DeviceIndex = None):
    """Capacity of one undivided packet using the whole share and full power."""
    w = np.asarray(beta, dtype=float) * params.bandwidth_total_hz
    snr = 2.0 * _select(params.rx_gain, device) * gain_sq / (w * params.noise_psd_w_per_hz)
    return w * np.log2(1.0 + snr)


def full_band_success(beta, payload_bits, params: ChannelParams, device: DeviceIndex = None):
    """Success probability of a single ``payload_bits`` packet on the full share."""
    b = _check_beta(beta)
    scale = _select(params.bandwidth_total_hz * params.noise_psd_w_per_hz / (2.0 * params.rx_gain), device)
    a = payload_bits / (params.latency_s * params.bandwidth_total_hz)
    with np.errstate(over="ignore"):
        out = np.exp(_exponent(b, scale, a))
    return out if np.ndim(out) else float(out)


def draw_fading(seed: int, round: int, num_devices: int, device_offset: int = 0) -> FadingDraw:
    """Unit-mean exponential ``|h|^2`` per device, a pure function of (seed, round, device)."""
    idx = np.arange(device_offset, device_offset + num_devices, dtype=np.uint64)
    u = _rng.counter_uniform(seed, _rng.FADING, round, index=idx)
    return FadingDraw(gain_sq=-np.log1p(-u), round=int(round))


def clamp_alpha(alpha, eps: float = 1e-6):
    """Keep alpha away from the 0/1 branches when q or p end up as divisors."""
    return np.clip(np.asarray(alpha, dtype=float), eps, 1.0 - eps)


def params_for(num_devices: int, *, bandwidth_hz=10e6, noise_dbm_per_hz=-174.0, pathloss_exponent=3.0,
               distances_m=100.0, tx_power_dbm=-4.0, latency_s=0.5, model_dim=60000, quant_bits=3,
               range_bits=64, tx_power_w: Optional[float] = None) -> ChannelParams:
    """Convenience constructor taking dBm quantities (converted once, here)."""
    d = np.broadcast_to(np.asarray(distances_m, dtype=float), (num_devices,)).copy()
    power = tx_power_w if tx_power_w is not None else dbm_to_watts(tx_power_dbm)
    return ChannelParams(
        bandwidth_total_hz=float(bandwidth_hz),
        noise_psd_w_per_hz=float(dbm_to_watts(noise_dbm_per_hz)),
        pathloss_exponent=float(pathloss_exponent),
        distances_m=d,
        tx_power_w=np.broadcast_to(np.asarray(power, dtype=float), (num_devices,)).copy(),
        latency_s=float(latency_s),
        model_dim=int(model_dim),
        quant_bits=int(quant_bits),
        range_bits=int(range_bits),
    )
