"""One-step convergence bound and the per-device G function it is built from.

For device k with sign/modulus success probabilities q, p the bound's
allocation-dependent part is

    G = (-4p + p^2 + L eta p/q) ||g_k||^2 + (-2p + p^2 + L eta (1-p)/q) ||gbar||^2
        + (6p - 2p^2) upsilon_k + L eta (p/q) delta_k^2

which, with p = exp(H_v/(1-alpha)) and 1/q = exp(-H_s/alpha), collapses to four
exponentials weighted by the coefficients A, B, C, D computed here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channel as ch


@dataclass(frozen=True)
class BoundInputs:
    grad_norm_sq: np.ndarray
    upsilon: np.ndarray
    epsilon_sq: np.ndarray
    delta_sq: np.ndarray
    global_grad_norm_sq: float
    comp_norm_sq: np.ndarray  # scalar when every device shares one compensation vector
    eta: float
    lipschitz: Optional[float] = None

    def __post_init__(self):
        for name in ("grad_norm_sq", "upsilon", "epsilon_sq", "delta_sq"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, arr)
        comp = np.asarray(self.comp_norm_sq, dtype=float)
        if np.any(comp < 0):
            raise ValueError("comp_norm_sq must be nonnegative")
        object.__setattr__(self, "comp_norm_sq", np.broadcast_to(comp, self.grad_norm_sq.shape).copy())
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", 1.0 / self.eta)
        elif not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.global_grad_norm_sq < 0:
            raise ValueError("global_grad_norm_sq must be nonnegative")

    @property
    def num_devices(self) -> int:
        return int(self.grad_norm_sq.size)

    @property
    def l_eta(self) -> float:
        return float(self.lipschitz * self.eta)

    @classmethod
    def from_gradients(cls, local_gradients, compensations, delta_sq, eta: float,
                       lipschitz: Optional[float] = None) -> "BoundInputs":
        """Assemble the per-round inputs from exact local gradients.

        ``compensations`` is one vector shared by all devices or one row per device.
        """
        g = np.atleast_2d(np.asarray(local_gradients, dtype=float))
        comp = np.broadcast_to(np.asarray(compensations, dtype=float), g.shape)
        g_bar = g.mean(axis=0)
        return cls(
            grad_norm_sq=np.einsum("ij,ij->i", g, g),
            upsilon=np.maximum(np.einsum("ij,ij->i", np.abs(g), comp), 0.0),
            epsilon_sq=epsilon_oracle(g, g_bar),
            delta_sq=np.asarray(delta_sq, dtype=float),
            global_grad_norm_sq=float(g_bar @ g_bar),
            comp_norm_sq=np.einsum("ij,ij->i", comp, comp),
            eta=eta,
            lipschitz=lipschitz,
        )


@dataclass(frozen=True)
class GCoefficients:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __getitem__(self, idx) -> "GCoefficients":
        return GCoefficients(*(np.asarray(v)[idx] for v in (self.a, self.b, self.c, self.d)))

    def __len__(self) -> int:
        return int(np.size(self.a))


def epsilon_oracle(local_gradients, global_gradient) -> np.ndarray:
    """Exact ``||g_k - g||^2`` per device."""
    diff = np.atleast_2d(np.asarray(local_gradients, dtype=float)) - np.asarray(global_gradient, dtype=float)
    return np.einsum("ij,ij->i", diff, diff)


def g_coefficients(inputs: BoundInputs, device: Optional[int] = None) -> GCoefficients:
    gn, cn, up, dl = inputs.grad_norm_sq, inputs.comp_norm_sq, inputs.upsilon, inputs.delta_sq
    le = inputs.l_eta
    coeffs = GCoefficients(
        a=2.0 * (-2.0 * gn - cn + 3.0 * up),
        b=gn + cn - 2.0 * up,
        c=le * (gn - cn + dl),
        d=le * cn,
    )
    return coeffs if device is None else coeffs[device]


def g_from_exponents(a, b, c, d, hs, hv, alpha):
    """Four-exponential G for given outage exponents; ``+inf`` where ``q = 0``.

    ``A e^{X} + B e^{2X} + C e^{X - Z} + D e^{-Z}`` with ``X = H_v/(1-alpha)``,
    ``Z = H_s/alpha``.
    """
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = np.where(alpha < 1, hv / np.where(alpha < 1, 1.0 - alpha, 1.0), -np.inf)
        z = np.where(alpha > 0, hs / np.where(alpha > 0, alpha, 1.0), -np.inf)
        # q below ~1e-308: 1/q overflows, so the sentinel applies
        q_zero = (alpha <= 0) | ~np.isfinite(np.exp(-z))
        val = (a * np.exp(x) + b * np.exp(2.0 * x) + c * np.exp(x - z) + d * np.exp(-z))
        val = np.where(q_zero, np.inf, val)
    return val if val.ndim else float(val)


def g_value(coeffs: GCoefficients, alpha, beta, channel: ch.ChannelParams, device=None):
    """G(alpha, beta) in its four-exponential form."""
    hs = ch.h_s(beta, channel, device)
    hv = ch.h_v(beta, channel, device)
    return g_from_exponents(coeffs.a, coeffs.b, coeffs.c, coeffs.d, hs, hv, alpha)


def g_probability_form(inputs: BoundInputs, p, q, device=None):
    """G written directly in the success probabilities; ``+inf`` where ``q = 0``."""
    sel = (lambda v: v) if device is None else (lambda v: v[device])
    gn, cn, up, dl = (sel(inputs.grad_norm_sq), sel(inputs.comp_norm_sq),
                      sel(inputs.upsilon), sel(inputs.delta_sq))
    le = inputs.l_eta
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_q = np.where(q > 0, 1.0 / np.where(q > 0, q, 1.0), np.inf)
        val = ((-4 * p + p * p + le * p * inv_q) * gn
               + (-2 * p + p * p + le * (1 - p) * inv_q) * cn
               + (6 * p - 2 * p * p) * up
               + le * p * inv_q * dl)
        # same sentinel as the exponent form: a subnormal q counts as zero
        val = np.where(np.isfinite(inv_q), val, np.inf)
    return val if val.ndim else float(val)


def bound_terms(inputs: BoundInputs, alpha, beta, channel: ch.ChannelParams,
                alpha_eps: float = 1e-6) -> dict:
    """Each additive piece of the one-step bound, plus the total."""
    eta, K = inputs.eta, inputs.num_devices
    al = ch.clamp_alpha(alpha, alpha_eps)
    g_vals = np.asarray(g_value(g_coefficients(inputs), al, np.asarray(beta, dtype=float), channel), dtype=float)
    descent = -0.5 * eta * inputs.global_grad_norm_sq
    compensation = 0.5 * eta * float(np.mean(inputs.comp_norm_sq))
    heterogeneity = eta / K * float(np.sum(inputs.grad_norm_sq + inputs.epsilon_sq - 2.0 * inputs.upsilon))
    allocation = eta / (2.0 * K) * float(np.sum(g_vals))
    return {
        "descent": descent,
        "compensation": compensation,
        "heterogeneity": heterogeneity,
        "allocation": allocation,
        "total": descent + compensation + heterogeneity + allocation,
    }


def one_step_bound(inputs: BoundInputs, alpha, beta, channel: ch.ChannelParams) -> float:
    """Upper bound on ``E[F(w_{n+1})] - F(w_n)``; ``+inf`` if any sign packet is hopeless."""
    return bound_terms(inputs, alpha, beta, channel)["total"]


def one_step_bound_from_probabilities(inputs: BoundInputs, p, q) -> float:
    """Same bound with the success probabilities supplied directly."""
    eta, K = inputs.eta, inputs.num_devices
    g_vals = np.asarray(g_probability_form(inputs, p, q), dtype=float)
    return (-0.5 * eta * inputs.global_grad_norm_sq
            + 0.5 * eta * float(np.mean(inputs.comp_norm_sq))
            + eta / K * float(np.sum(inputs.grad_norm_sq + inputs.epsilon_sq - 2.0 * inputs.upsilon))
            + eta / (2.0 * K) * float(np.sum(g_vals)))


__all__ = [
    "BoundInputs", "GCoefficients", "epsilon_oracle", "g_coefficients", "g_from_exponents", "g_value",
    "g_probability_form", "bound_terms", "one_step_bound", "one_step_bound_from_probabilities"
]
