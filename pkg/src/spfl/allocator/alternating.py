"""Alternating power/bandwidth optimization of the round-wise objective."""

from __future__ import annotations

import time

import numpy as np

from .. import channel as ch
from ..bound import GCoefficients
from .objective import objective
from .penalty import optimize_bandwidth_penalty
from .power import optimize_power
from .sca import optimize_bandwidth_sca
from .types import BETA_FLOOR, AllocationPair, SolverDiagnostics

METHODS = ("sca", "penalty")


def alternate(coeffs: GCoefficients, channel: ch.ChannelParams, method: str = "sca", tol: float = 1e-8,
              max_iter: int = 30, start: AllocationPair | None = None, floor: float = BETA_FLOOR):
    """Block-coordinate descent: power split per device, then all bandwidth shares.

    A block update is only accepted when it does not raise the objective, so
    the recorded trace is nonincreasing even when a subsolver returns a
    slightly worse point (the penalty solver's barrier can do that).
    """
    if method not in METHODS:
        raise ValueError(f"unknown bandwidth method {method!r}; valid: {', '.join(METHODS)}")
    t0 = time.perf_counter()
    K = channel.num_devices
    if len(coeffs) != K:
        raise ValueError(f"{len(coeffs)} coefficient rows for {K} devices")
    start = start or AllocationPair.uniform(K)
    alpha, beta = start.alpha.copy(), start.beta.copy()
    f = objective(coeffs, alpha, beta, channel)
    diag = SolverDiagnostics(method=method, objective_trace=[f])
    converged = False
    for it in range(1, max_iter + 1):
        f_prev = f
        new_alpha, info = optimize_power(coeffs, beta, channel, return_info=True)
        f_alpha = objective(coeffs, new_alpha, beta, channel)
        if f_alpha <= f:
            alpha, f = new_alpha, f_alpha
        diag.root_residuals = [float(r.max()) if r.size else 0.0 for r in info.residuals]
        if method == "sca":
            new_beta, sub = optimize_bandwidth_sca(coeffs, alpha, channel, beta, floor=floor, raise_on_cap=False)
        else:
            new_beta, sub = optimize_bandwidth_penalty(coeffs, alpha, channel, beta, floor=floor)
        diag.inner_iterations += sub.outer_iterations
        diag.case_counts = sub.case_counts
        if sub.warning:
            diag.warning = sub.warning
        f_beta = objective(coeffs, alpha, new_beta, channel)
        if f_beta <= f:
            beta, f = new_beta, f_beta
        diag.objective_trace.append(f)
        diag.outer_iterations = it
        if f_prev - f <= tol * max(1.0, abs(f)):
            converged = True
            break
    diag.converged = converged
    if not converged:
        diag.warning = f"alternation stopped at the {max_iter}-iteration cap"
    diag.wall_time_s = time.perf_counter() - t0
    return AllocationPair(alpha, beta), diag
