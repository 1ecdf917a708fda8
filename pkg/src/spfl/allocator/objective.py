"""Round-wise allocation objective and its bandwidth derivatives."""

from __future__ import annotations

import numpy as np

from .. import channel as ch
from ..bound import GCoefficients, g_value

_CAP = 700.0


def objective(coeffs: GCoefficients, alpha, beta, channel: ch.ChannelParams) -> float:
    """Sum of per-device G values."""
    return float(np.sum(g_value(coeffs, np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float), channel)))


def g_beta_derivs(coeffs: GCoefficients, alpha, beta, channel: ch.ChannelParams):
    """Per-device ``(G, dG/dbeta, d2G/dbeta2)`` at fixed power split.

    ``1/q`` is saturated at ``e^700`` so that hopeless shares stay finite and
    keep the right sign instead of turning into inf - inf.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    has_mod = alpha < 1
    inv_om = np.where(has_mod, 1.0 / np.where(has_mod, 1.0 - alpha, 1.0), 0.0)
    inv_al = 1.0 / alpha
    hv, hv1, hv2 = ch.h_v_derivs(beta, channel)
    hs, hs1, hs2 = ch.h_s_derivs(beta, channel)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        x, x1, x2 = (np.where(has_mod, v * inv_om, 0.0) for v in (hv, hv1, hv2))
        z, z1, z2 = hs * inv_al, hs1 * inv_al, hs2 * inv_al
        p = np.where(has_mod, np.exp(x), 0.0)
        iq = np.exp(np.minimum(-z, _CAP))
        a, b, c, d = coeffs.a, coeffs.b, coeffs.c, coeffs.d
        live = p > 0  # p = 0 kills the A, B, C terms even where x' is infinite
        x1 = np.where(live, x1, 0.0)
        x2 = np.where(live, x2, 0.0)
        cp = c * p * iq
        w1 = x1 - z1
        dq = np.where(d != 0, d * iq, 0.0)  # D = 0 must not meet an infinite 1/q
        g = a * p + b * p * p + cp + dq
        g1 = a * p * x1 + 2.0 * b * p * p * x1 + np.where(live, cp * w1, 0.0) - np.where(d != 0, dq * z1, 0.0)
        g2 = (a * p * (x1 * x1 + x2) + 2.0 * b * p * p * (2.0 * x1 * x1 + x2)
              + np.where(live, cp * (w1 * w1 + x2 - z2), 0.0) + np.where(d != 0, dq * (z1 * z1 - z2), 0.0))
    return g, g1, g2
