"""Stochastic uniform quantization of gradient moduli, with separate sign vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantizedGradient:
    """Sign vector plus ``bits``-bit knob indices over ``[g_min, g_max]``."""

    signs: np.ndarray          # int8, values in {-1, +1}
    modulus_codes: np.ndarray  # int64, values in [0, 2**bits - 1]
    g_min: float
    g_max: float
    bits: int

    @property
    def levels(self) -> int:
        return 2 ** self.bits - 1

    @property
    def model_dim(self) -> int:
        return int(self.signs.size)


@dataclass(frozen=True)
class QuantBound:
    delta_sq: float


def signum(g) -> np.ndarray:
    """Signum with ``s(0) = +1``."""
    return np.where(np.asarray(g) >= 0, 1, -1).astype(np.int8)


def quantize(gradient, bits: int, rng: np.random.Generator) -> QuantizedGradient:
    """Unbiased stochastic rounding of ``|g_i|`` onto ``2**bits`` uniform knobs.

    The knob range is the tightest one for this gradient,
    ``[min |g_i|, max |g_i|]``.  A modulus between knobs ``c_u`` and
    ``c_{u+1}`` rounds up with probability ``(|g_i| - c_u) / (c_{u+1} - c_u)``.
    """
    g = np.asarray(gradient, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValueError("gradient must be a non-empty vector")
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient contains non-finite entries")

    mag = np.abs(g)
    g_min, g_max = float(mag.min()), float(mag.max())
    levels = 2 ** bits - 1
    if g_max == g_min:
        codes = np.zeros(g.size, dtype=np.int64)
    else:
        pos = (mag - g_min) * (levels / (g_max - g_min))
        pos = np.clip(pos, 0.0, levels)
        pos[mag == g_max] = levels
        lower = np.minimum(np.floor(pos), levels - 1)
        up = rng.random(g.size) < (pos - lower)
        codes = lower.astype(np.int64) + up
    return QuantizedGradient(signum(g), codes, g_min, g_max, int(bits))


def knob_values(q: QuantizedGradient) -> np.ndarray:
    """Decoded moduli ``c_code`` (nonnegative)."""
    codes = np.asarray(q.modulus_codes)
    if np.any(codes < 0) or np.any(codes > q.levels):
        raise ValueError(f"modulus code outside [0, {q.levels}]")
    step = (q.g_max - q.g_min) / q.levels
    vals = q.g_min + codes * step
    return np.where(codes == q.levels, q.g_max, vals)


def decode(q: QuantizedGradient) -> np.ndarray:
    return q.signs * knob_values(q)


def variance_bound(q: QuantizedGradient, model_dim: int | None = None) -> QuantBound:
    """``l (g_max - g_min)^2 / (4 (2^b - 1))``, an upper bound on ``E||Q(g) - g||^2``."""
    l = q.model_dim if model_dim is None else int(model_dim)
    return QuantBound(l * (q.g_max - q.g_min) ** 2 / (4.0 * q.levels))


def gradient_delta_sq(gradient, bits: int) -> float:
    """The same bound computed straight from the gradient, before any rounding."""
    mag = np.abs(np.asarray(gradient, dtype=float))
    return float(mag.size * (mag.max() - mag.min()) ** 2 / (4.0 * (2 ** bits - 1)))


def expected_squared_error(gradient, bits: int) -> float:
    """Exact ``E||Q(g) - g||^2`` for the stochastic rounding above."""
    mag = np.abs(np.asarray(gradient, dtype=float))
    g_min, g_max = mag.min(), mag.max()
    if g_max == g_min:
        return 0.0
    levels = 2 ** bits - 1
    step = (g_max - g_min) / levels
    frac = np.clip((mag - g_min) / step, 0, levels)
    frac = frac - np.minimum(np.floor(frac), levels - 1)
    return float(np.sum(frac * (1 - frac)) * step ** 2)


def sample_decoded(gradient, bits: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws of ``decode(quantize(g))`` as a (size, l) array."""
    g = np.asarray(gradient, dtype=float)
    mag = np.abs(g)
    g_min, g_max = mag.min(), mag.max()
    signs = signum(g)
    if g_max == g_min:
        return np.broadcast_to(signs * g_min, (size, g.size)).astype(float)
    levels = 2 ** bits - 1
    step = (g_max - g_min) / levels
    pos = np.clip((mag - g_min) / step, 0.0, levels)
    pos[mag == g_max] = levels
    lower = np.minimum(np.floor(pos), levels - 1)
    codes = lower + (rng.random((size, g.size)) < (pos - lower))
    vals = np.where(codes == levels, g_max, g_min + codes * step)
    return signs * vals
