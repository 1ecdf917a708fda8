"""Bandwidth shares by successive convex approximation.

At the current iterate ``beta0`` every device's G is replaced by a convex
upper bound that touches it at ``beta0``.  Which bound is used depends on the
signs of A and C:

* terms that grow with ``X = H_v/(1-alpha)`` (A >= 0, B, C >= 0) see X through
  its tangent line, which lies above the concave X;
* terms that shrink with X (A < 0, C < 0) see ``exp`` through its tangent,
  which lies below the convex ``exp``; for C < 0 the ``-H_s/alpha`` part is
  also linearized.

These are the auxiliary-variable constraints ``t >= X``, ``y <= e^X`` and
``z <= e^{X - Z}`` with the auxiliaries eliminated, so the surrogate is a sum
of smooth convex functions of one variable each.  It is minimized exactly
under ``floor <= beta_k`` and ``sum beta <= 1`` through the multiplier of the
sum constraint.  Because the surrogate majorizes the objective and is tight at
``beta0``, the true objective never increases between iterations.
"""

from __future__ import annotations

import time

import numpy as np

from .. import channel as ch
from ..bound import GCoefficients
from .objective import objective
from .types import BETA_FLOOR, SolverDiagnostics

GAMMA2 = 1e-6
_CAP = 700.0


class SolverError(RuntimeError):
    """Raised when an allocation solver stops without meeting its contract."""

    def __init__(self, message: str, diagnostics: SolverDiagnostics | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics


def share_bounds(num_devices: int, floor: float = BETA_FLOOR):
    hi = min(1.0 - floor, 1.0 - (num_devices - 1) * floor)
    if hi <= floor:
        raise ValueError(f"{num_devices} devices cannot each get a share of at least {floor}")
    return floor, hi


def case_labels(coeffs: GCoefficients) -> np.ndarray:
    """1..4 by the signs of (A, C): (+,+), (+,-), (-,+), (-,-)."""
    a_neg = np.asarray(coeffs.a) < 0
    c_neg = np.asarray(coeffs.c) < 0
    return 1 + c_neg.astype(int) + 2 * a_neg.astype(int)


def check_start(beta, floor: float = BETA_FLOOR) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    lo, hi = share_bounds(beta.size, floor)
    if np.any(beta < lo * (1 - 1e-12)) or np.any(beta > hi) or beta.sum() > 1 + 1e-12:
        raise ValueError("starting bandwidth shares are infeasible")
    return beta


def _sat_exp(x):
    return np.exp(np.minimum(x, _CAP))


class Surrogate:
    """Convex majorizer of ``sum_k G_k`` around ``beta0`` at fixed power split."""

    def __init__(self, coeffs: GCoefficients, alpha, beta0, channel: ch.ChannelParams):
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0):
            raise ValueError("a device with alpha = 0 can never deliver its signs")
        self.channel = channel
        has_mod = alpha < 1
        # alpha = 1: the modulus packet never arrives, so A, B, C drop out
        self.a = np.where(has_mod, coeffs.a, 0.0)
        self.b = np.where(has_mod, coeffs.b, 0.0)
        self.c = np.where(has_mod, coeffs.c, 0.0)
        self.d = np.asarray(coeffs.d, dtype=float)
        self.has_mod = has_mod
        self.inv_om = np.where(has_mod, 1.0 / np.where(has_mod, 1.0 - alpha, 1.0), 0.0)
        self.inv_al = 1.0 / alpha
        self.beta0 = np.asarray(beta0, dtype=float).copy()
        hv, hv1, _ = ch.h_v_derivs(self.beta0, channel)
        hs, hs1, _ = ch.h_s_derivs(self.beta0, channel)
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            self.x0, self.x0p = (np.where(has_mod, v * self.inv_om, 0.0) for v in (hv, hv1))
            self.z0, self.z0p = hs * self.inv_al, hs1 * self.inv_al
            self.y0 = np.exp(self.x0)
            self.zz0 = _sat_exp(self.x0 - self.z0)
        self.a_pos = self.a >= 0
        self.c_pos = self.c >= 0

    def evaluate(self, beta, order: int = 2):
        beta = np.asarray(beta, dtype=float)
        hv, hv1, hv2 = ch.h_v_derivs(beta, self.channel)
        hs, hs1, hs2 = ch.h_s_derivs(beta, self.channel)
        a, b, c, d = self.a, self.b, self.c, self.d
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            x, x1, x2 = (np.where(self.has_mod, v * self.inv_om, 0.0) for v in (hv, hv1, hv2))
            z, z1, z2 = hs * self.inv_al, hs1 * self.inv_al, hs2 * self.inv_al
            db = beta - self.beta0
            xt = self.x0 + self.x0p * db
            zt = self.z0 + self.z0p * db
            e_xt = np.exp(np.minimum(xt, _CAP))
            e_2xt = e_xt * e_xt
            v = xt - z
            e_v = _sat_exp(v)
            e_mz = _sat_exp(-z)
            # A term
            s_a = np.where(self.a_pos, a * e_xt, a * self.y0 * (1.0 + x - self.x0))
            # C term
            s_c = np.where(self.c_pos, c * e_v, c * self.zz0 * (1.0 + x - zt - self.x0 + self.z0))
            live_d = d != 0
            s = s_a + b * e_2xt + s_c + np.where(live_d, d * e_mz, 0.0)
            if order == 0:
                return s
            v1 = self.x0p - z1
            s1 = (np.where(self.a_pos, a * e_xt * self.x0p, a * self.y0 * x1)
                  + 2.0 * b * self.x0p * e_2xt
                  + np.where(self.c_pos, c * e_v * v1, c * self.zz0 * (x1 - self.z0p))
                  - np.where(live_d, d * e_mz * z1, 0.0))
            s2 = (np.where(self.a_pos, a * e_xt * self.x0p ** 2, a * self.y0 * x2)
                  + 4.0 * b * self.x0p ** 2 * e_2xt
                  + np.where(self.c_pos, c * e_v * (v1 * v1 - z2), c * self.zz0 * x2)
                  + np.where(live_d, d * e_mz * (z1 * z1 - z2), 0.0))
        return s, s1, np.maximum(s2, 0.0)

    def aux_gap(self, beta) -> np.ndarray:
        """``|t - H_v/(1-alpha)|`` when t sits on its linearized constraint."""
        hv = ch.h_v(np.asarray(beta, dtype=float), self.channel)
        xt = self.x0 + self.x0p * (np.asarray(beta) - self.beta0)
        return np.abs(xt - hv * self.inv_om)


def _solve_shares(sur: Surrogate, lam: float, lo: float, hi: float, s1_lo, s1_hi, start, maxit: int = 100):
    """Per-device minimizer of ``S_k(beta) + lam * beta`` on [lo, hi]."""
    K = start.size
    at_lo = s1_lo + lam >= 0
    at_hi = s1_hi + lam <= 0
    free = ~(at_lo | at_hi)
    beta = np.where(at_lo, lo, np.where(at_hi, hi, np.clip(start, lo, hi)))
    if not free.any():
        return beta, free, np.zeros(K), 0
    left = np.full(K, lo)
    right = np.full(K, hi)
    active = free.copy()
    s2 = np.zeros(K)
    last = right - left
    it = 0
    for it in range(1, maxit + 1):
        _, s1, s2_now = sur.evaluate(beta)
        s2 = np.where(free, s2_now, s2)
        f = s1 + lam
        neg = active & (f < 0)
        pos = active & (f >= 0)
        left = np.where(neg, beta, left)
        right = np.where(pos, beta, right)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = f / s2_now
            newton = beta - step
            # Newton only while it at least halves the step; crawling steps fall back to bisection
            ok = (np.isfinite(newton) & (newton >= left) & (newton <= right)
                  & (np.abs(2.0 * step) <= last))
        nxt = np.where(ok, newton, 0.5 * (left + right))
        last = np.where(active, np.abs(nxt - beta), last)
        settled = (f == 0) | (nxt == beta) | (ok & (np.abs(step) <= 1e-14 * beta))
        beta = np.where(active & ~settled, nxt, beta)
        active = active & ~(settled | (right - left <= 1e-15 * right))
        if not active.any():
            break
    return beta, free, s2, it


class _LambdaSolve:
    def __init__(self, sur: Surrogate, lo: float, hi: float):
        self.sur, self.lo, self.hi = sur, lo, hi
        K = sur.beta0.size
        self.s1_lo = sur.evaluate(np.full(K, lo))[1]
        self.s1_hi = sur.evaluate(np.full(K, hi))[1]
        self.inner = 0

    def shares(self, lam, start):
        beta, free, s2, it = _solve_shares(self.sur, lam, self.lo, self.hi, self.s1_lo, self.s1_hi, start)
        self.inner += it
        return beta, free, s2

    def solve(self, start, lam0: float = 0.0):
        """KKT point of the surrogate; ``lam0`` warm-starts the multiplier."""
        # every share sits at the floor once lam >= max(-S'(lo)); that may be +inf
        lam_a, lam_b = 0.0, float(np.max(-self.s1_lo))
        zero_checked = False
        if lam0 > 0 and lam0 < lam_b:
            lam, beta = lam0, start
        else:
            beta, free, s2 = self.shares(0.0, start)
            if beta.sum() <= 1.0:
                return beta, 0.0
            zero_checked = True
            with np.errstate(divide="ignore"):
                slope = -np.sum(np.where(free & (s2 > 0), 1.0 / s2, 0.0))
            lam = -(beta.sum() - 1.0) / slope if slope < 0 else np.nan
            if not (np.isfinite(lam) and 0 < lam < lam_b):
                lam = float(np.max(np.abs(self.sur.evaluate(beta)[1]))) or 1.0
        for _ in range(200):
            beta, free, s2 = self.shares(lam, beta)
            phi = beta.sum() - 1.0
            if abs(phi) <= 1e-13:
                break
            if phi > 0:
                lam_a = lam
            else:
                if not zero_checked:
                    # a warm start below the budget: the constraint may have gone slack
                    zero_checked = True
                    b0, _, _ = self.shares(0.0, beta)
                    if b0.sum() <= 1.0:
                        return b0, 0.0
                lam_b = lam
            with np.errstate(divide="ignore"):
                slope = -np.sum(np.where(free & (s2 > 0), 1.0 / s2, 0.0))
            cand = lam - phi / slope if slope < 0 else np.nan
            if not (np.isfinite(cand) and lam_a < cand < lam_b):
                if not np.isfinite(lam_b):
                    cand = 4.0 * lam
                elif lam_b > 4.0 * lam_a:
                    cand = np.sqrt(max(lam_a, lam_b * 1e-30) * lam_b)
                else:
                    cand = 0.5 * (lam_a + lam_b)
            if np.isfinite(lam_b) and lam_b - lam_a <= 1e-15 * lam_b:
                break
            lam = cand
        excess = beta.sum() - 1.0
        if excess > 0:
            free_idx = np.flatnonzero(beta > self.lo)
            beta[free_idx] -= excess / max(free_idx.size, 1)
            beta = np.maximum(beta, self.lo)
        return beta, lam

    def kkt_residual(self, beta, lam) -> float:
        s1 = self.sur.evaluate(beta)[1]
        g = s1 + lam
        scale = max(1.0, abs(lam), float(np.max(np.abs(s1))))
        interior = (beta > self.lo) & (beta < self.hi)
        r = np.where(interior, np.abs(g), 0.0)
        r = np.where(beta <= self.lo, np.maximum(-g, 0.0), r)
        r = np.where(beta >= self.hi, np.maximum(g, 0.0), r)
        slack = 1.0 - beta.sum()
        comp = abs(lam) * max(slack, 0.0)
        return float(max(r.max() / scale, comp / scale, max(-slack, 0.0)))


def optimize_bandwidth_sca(coeffs: GCoefficients, alpha, channel: ch.ChannelParams, beta_start,
                           floor: float = BETA_FLOOR, tol: float = 1e-10, max_iter: int = 200,
                           gamma2: float = GAMMA2, raise_on_cap: bool = True):
    """Minimize ``sum_k G_k(alpha_k, beta_k)`` over beta by iterated convex majorization.

    Returns ``(beta, diagnostics)``; the objective trace in the diagnostics is
    the true objective at each iterate.
    """
    t0 = time.perf_counter()
    beta = check_start(beta_start, floor)
    alpha = np.asarray(alpha, dtype=float)
    lo, hi = share_bounds(beta.size, floor)
    diag = SolverDiagnostics(method="sca")
    labels = case_labels(coeffs)
    diag.case_counts = {f"K{i}": int(np.sum(labels == i)) for i in range(1, 5)}
    f = objective(coeffs, alpha, beta, channel)
    diag.objective_trace.append(f)
    kkt = []
    converged = False
    sur = None
    lam = 0.0
    for r in range(1, max_iter + 1):
        sur = Surrogate(coeffs, alpha, beta, channel)
        solver = _LambdaSolve(sur, lo, hi)
        new_beta, lam = solver.solve(beta, lam)
        diag.inner_iterations += solver.inner
        kkt.append(solver.kkt_residual(new_beta, lam))
        f_new = objective(coeffs, alpha, new_beta, channel)
        diag.outer_iterations = r
        if f_new > f + 1e-13 * max(1.0, abs(f)):
            # majorization guarantees descent; anything else is rounding noise
            converged = True
            break
        change = f - f_new
        step = float(np.max(np.abs(new_beta - beta)))
        beta, f = new_beta, f_new
        diag.objective_trace.append(f)
        if change <= tol * max(1.0, abs(f)) or step <= 1e-13:
            converged = True
            break
    diag.root_residuals = kkt
    if sur is not None:
        gap = sur.aux_gap(beta)
        diag.extra["aux_gap_K1"] = float(np.max(gap[labels == 1])) if np.any(labels == 1) else 0.0
    diag.converged = converged and (not kkt or max(kkt[-1], 0.0) <= gamma2)
    diag.wall_time_s = time.perf_counter() - t0
    if not converged:
        diag.warning = f"SCA hit the {max_iter}-iteration cap"
        if raise_on_cap:
            raise SolverError(diag.warning, diag)
    elif not diag.converged:
        diag.warning = f"inner KKT residual {kkt[-1]:.3g} above {gamma2}"
    return beta, diag
