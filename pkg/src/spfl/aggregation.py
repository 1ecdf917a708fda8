"""Server-side aggregation with 1/q unbiasing and compensation moduli."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .quantizer import sample_decoded, signum

COMPENSATION_KINDS = ("zero", "previous_global_modulus", "previous_local_modulus")


@dataclass
class GlobalEstimate:
    g_hat: np.ndarray
    contributing: frozenset
    per_device_terms: np.ndarray  # (K, l); row k is present_k / q_k, zeros if rejected


def aggregate(reconstructions: Sequence[Optional[np.ndarray]], q_values, num_devices: int,
              model_dim: Optional[int] = None) -> GlobalEstimate:
    """``g_hat = (1/K) sum_k present_k / q_k``; rejected devices add nothing."""
    q = np.asarray(q_values, dtype=float)
    if len(reconstructions) != num_devices or q.size != num_devices:
        raise ValueError(f"expected {num_devices} devices, got {len(reconstructions)} reconstructions "
                         f"and {q.size} probabilities")
    dim = next((r.size for r in reconstructions if r is not None), model_dim)
    if dim is None:
        raise ValueError("no device delivered and model_dim was not given")
    terms = np.zeros((num_devices, dim))
    present = []
    for k, r in enumerate(reconstructions):
        if r is None:
            continue
        if q[k] <= 0:
            raise ValueError(f"device {k} delivered a packet but its success probability is {q[k]}")
        terms[k] = np.asarray(r, dtype=float) / q[k]
        present.append(k)
    total = np.zeros(dim)
    for k in range(num_devices):  # fixed order keeps the float sum reproducible
        total = total + terms[k]
    return GlobalEstimate(total / num_devices, frozenset(present), terms)


def sum_terms(estimate: GlobalEstimate) -> np.ndarray:
    total = np.zeros(estimate.per_device_terms.shape[1])
    for row in estimate.per_device_terms:
        total = total + row
    return total / estimate.per_device_terms.shape[0]


def update_model(w, g_hat, eta: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    if w.shape != g_hat.shape:
        raise ValueError(f"model has shape {w.shape} but update has shape {g_hat.shape}")
    if not eta > 0:
        raise ValueError("learning rate must be positive")
    return w - eta * g_hat


@dataclass
class CompensationPolicy:
    """Source of the moduli used when a device's signs arrive but its moduli do not.

    ``previous_global_modulus`` reuses ``|g_hat|`` from the last round;
    ``previous_local_modulus`` reuses the last modulus vector the server
    decoded from that same device.  Before any history exists the vector is 0.
    """

    kind: str = "previous_global_modulus"
    model_dim: int = 0
    previous_global: Optional[np.ndarray] = None
    previous_local: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in COMPENSATION_KINDS:
            raise ValueError(f"unknown compensation kind {self.kind!r}; valid: {', '.join(COMPENSATION_KINDS)}")

    def vector(self, device: int) -> np.ndarray:
        if self.kind == "previous_global_modulus" and self.previous_global is not None:
            return np.abs(self.previous_global)
        if self.kind == "previous_local_modulus" and device in self.previous_local:
            return self.previous_local[device].copy()
        return np.zeros(self.model_dim)

    def record_global(self, g_hat) -> None:
        self.previous_global = np.array(g_hat, dtype=float)

    def record_local(self, device: int, moduli) -> None:
        self.previous_local[device] = np.abs(np.asarray(moduli, dtype=float))


def compensation_vector(policy: CompensationPolicy, device: int = 0) -> np.ndarray:
    return policy.vector(device)


def upsilon(gradient, compensation) -> float:
    """``<g, s(g) * gbar> = sum |g_i| gbar_i`` (nonnegative for gbar >= 0)."""
    g = np.asarray(gradient, dtype=float)
    return float(np.dot(g, signum(g) * np.asarray(compensation, dtype=float)))


@dataclass(frozen=True)
class UnbiasednessResult:
    max_deviation: float
    max_abs_z: float
    analytic_mean: np.ndarray
    empirical_mean: np.ndarray


def analytic_mean(p_values, gradients, compensations) -> np.ndarray:
    """``(1/K) sum_k [p_k g_k + (1 - p_k) s(g_k) * gbar_k]``."""
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    comp = np.broadcast_to(np.asarray(compensations, dtype=float), g.shape)
    p = np.asarray(p_values, dtype=float)[:, None]
    return np.mean(p * g + (1 - p) * signum(g) * comp, axis=0)


def unbiasedness_check(q_values, p_values, gradients, compensations, trials: int,
                       rng: np.random.Generator, bits: int = 3) -> UnbiasednessResult:
    """Monte-Carlo mean of ``g_hat`` against its analytic conditional mean.

    Each trial redraws the quantization noise and both packet outcomes for
    every device.  Returns the largest coordinate deviation and its z-score.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    K, dim = g.shape
    comp = np.broadcast_to(np.asarray(compensations, dtype=float), g.shape)
    q = np.asarray(q_values, dtype=float)
    p = np.asarray(p_values, dtype=float)
    total = np.zeros(dim)
    total_sq = np.zeros(dim)
    chunk = max(1, min(trials, 20000))
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        g_hat = np.zeros((n, dim))
        for k in range(K):
            decoded = sample_decoded(g[k], bits, rng, n)
            sign_ok = rng.random(n) < q[k]
            mod_ok = rng.random(n) < p[k]
            rec = np.where(mod_ok[:, None], decoded, signum(g[k]) * comp[k])
            g_hat += np.where(sign_ok[:, None], rec / q[k], 0.0)
        g_hat /= K
        total += g_hat.sum(axis=0)
        total_sq += (g_hat ** 2).sum(axis=0)
        done += n
    mean = total / trials
    var = np.maximum(total_sq / trials - mean ** 2, 0.0)
    se = np.sqrt(var / trials)
    target = analytic_mean(p, g, comp)
    dev = np.abs(mean - target)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev > 1e-12, np.inf, 0.0))
    return UnbiasednessResult(float(dev.max()), float(z.max()), target, mean)
