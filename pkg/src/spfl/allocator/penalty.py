"""Low-complexity bandwidth solver: log-barrier penalty plus gradient descent.

Minimizes

    sum_k G_k(beta_k) - (1/mu) [sum_k lg beta_k + sum_k lg(1 - beta_k) + lg(1 - sum_k beta_k)]

for an increasing sequence of ``mu``, warm-starting each stage from the last.
The barrier is +inf outside the open feasible set, so every accepted iterate
stays strictly inside it.
"""

from __future__ import annotations

import math
import time
from typing import Sequence

import numpy as np

from .. import channel as ch
from ..bound import GCoefficients
from .objective import g_beta_derivs, objective
from .sca import SolverError, check_start
from .types import BETA_FLOOR, SolverDiagnostics

MU_SCHEDULE = (1e2, 1e3, 1e4, 1e5)
_LN10 = math.log(10.0)


def penalized(coeffs: GCoefficients, alpha, beta, channel: ch.ChannelParams, mu: float):
    """Penalized objective, its gradient, and a positive-definite curvature model."""
    beta = np.asarray(beta, dtype=float)
    slack = 1.0 - beta.sum()
    if np.any(beta <= 0) or np.any(beta >= 1) or slack <= 0:
        return np.inf, None, None
    g, g1, g2 = g_beta_derivs(coeffs, alpha, beta, channel)
    w = 1.0 / (mu * _LN10)
    val = float(np.sum(g)) - w * (np.sum(np.log(beta)) + np.sum(np.log1p(-beta)) + math.log(slack))
    grad = g1 - w / beta + w / (1.0 - beta) + w / slack
    curv = np.abs(g2) + w / beta ** 2 + w / (1.0 - beta) ** 2
    if not (np.isfinite(val) and np.all(np.isfinite(grad))) or np.any(np.isnan(curv)):
        return np.inf, None, None
    return val, grad, (curv, w / slack ** 2)


def _scaled_direction(grad, metric):
    """``-M^{-1} grad`` for ``M = diag(h) + c 11^T`` (positive definite), via Sherman-Morrison.

    ``h`` holds |G''| plus the separable barrier curvature and ``c`` is the
    curvature of the coupling term, so M tracks the Hessian's scale without
    ever being indefinite.
    """
    h, c = metric
    hg = grad / h
    h1 = 1.0 / h
    return -(hg - h1 * (c * hg.sum() / (1.0 + c * h1.sum())))


def _max_step(beta, d) -> float:
    """Largest t keeping ``beta + t d`` inside the open feasible set."""
    t = np.inf
    neg = d < 0
    if neg.any():
        t = min(t, float(np.min(-beta[neg] / d[neg])))
    pos = d > 0
    if pos.any():
        t = min(t, float(np.min((1.0 - beta[pos]) / d[pos])))
    ds = d.sum()
    if ds > 0:
        t = min(t, (1.0 - beta.sum()) / ds)
    return t


def _descend(coeffs, alpha, channel, beta, mu, diag: SolverDiagnostics, max_iter: int, tol: float):
    """Scaled gradient descent with Armijo backtracking for one barrier weight."""
    f, grad, curv = penalized(coeffs, alpha, beta, channel, mu)
    if not np.isfinite(f):
        raise SolverError("penalty start is outside the barrier domain", diag)
    trace = [f]
    for it in range(max_iter):
        d = _scaled_direction(grad, curv)
        slope = float(grad @ d)
        if -slope <= tol * max(1.0, abs(f)):
            break
        t = min(1.0, 0.99 * _max_step(beta, d))
        for _ in range(60):
            cand = beta + t * d
            f_new, g_new, c_new = penalized(coeffs, alpha, cand, channel, mu)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            if -slope <= 1e3 * tol * max(1.0, abs(f)):
                break  # already at the rounding floor of f
            raise SolverError(f"line search failed at mu={mu:g} after {it} iterations", diag)
        diag.inner_iterations += 1
        improved = f - f_new
        beta, f, grad, curv = cand, f_new, g_new, c_new
        trace.append(f)
        if improved <= 1e-15 * max(1.0, abs(f)):
            break
    return beta, trace


def optimize_bandwidth_penalty(coeffs: GCoefficients, alpha, channel: ch.ChannelParams, beta_start,
                               mu_schedule: Sequence[float] = MU_SCHEDULE, floor: float = BETA_FLOOR,
                               max_iter: int = 500, tol: float = 1e-13):
    """Barrier-penalty bandwidth shares; returns ``(beta, diagnostics)``."""
    t0 = time.perf_counter()
    beta = check_start(beta_start, floor).copy()
    alpha = np.asarray(alpha, dtype=float)
    if beta.sum() >= 1.0:  # the barrier needs strict slack
        beta *= (1.0 - 1e-9) / beta.sum()
    diag = SolverDiagnostics(method="penalty")
    diag.objective_trace.append(objective(coeffs, alpha, beta, channel))
    stage_traces = []
    for mu in mu_schedule:
        beta, trace = _descend(coeffs, alpha, channel, beta, mu, diag, max_iter, tol)
        stage_traces.append(trace)
        diag.outer_iterations += 1
        diag.objective_trace.append(objective(coeffs, alpha, beta, channel))
    # the barrier keeps beta off zero, but not necessarily above the floor
    beta = np.maximum(beta, floor)
    if beta.sum() > 1.0:
        beta *= 1.0 / beta.sum()
    diag.extra["stage_traces"] = stage_traces
    diag.wall_time_s = time.perf_counter() - t0
    return beta, diag
