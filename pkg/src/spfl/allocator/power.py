"""Power split between the sign and modulus packets, one device at a time.

With the bandwidth share fixed, G(alpha) tends to +inf as alpha -> 0 and has
negative slope there, so its minimum over (0, 1] sits either at a stationary
point of G or at alpha = 1.  Stationary points are bracketed by a sign scan of
G' and polished with Newton-Raphson, falling back to bisection whenever the
Newton step leaves the bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .. import channel as ch
from ..bound import GCoefficients, g_from_exponents

GAMMA1 = 1e-8
_EXP_CAP = 700.0


def _sat_exp(x: float) -> float:
    return math.exp(min(x, _EXP_CAP))


def g_alpha_derivs(a, b, c, d, hs, hv, alpha, second: bool = False):
    """dG/dalpha (and d2G/dalpha2) for fixed exponents, vectorized.

    Written as ``P u (A + 2 B P) + (1/q) [C P (u + w) + D w]`` with
    ``P = exp(H_v/(1-alpha))``, ``u = H_v/(1-alpha)^2`` and ``w = H_s/alpha^2``;
    the 1/q factor is saturated so the sign survives overflow.
    """
    al = np.asarray(alpha, dtype=float)
    if np.any((al <= 0) | (al >= 1)):
        raise ch.DomainError("G' is only defined for 0 < alpha < 1")
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        om = 1.0 - al
        P = np.exp(hv / om)
        u = hv / om ** 2
        w = hs / al ** 2
        inv_q = np.exp(np.minimum(-hs / al, _EXP_CAP))
        bracket = c * P * (u + w) + d * w
        f = P * u * (a + 2.0 * b * P) + inv_q * bracket
        if not second:
            return f
        u1 = 2.0 * hv / om ** 3
        w1 = -2.0 * hs / al ** 3
        df = (a * P * (u * u + u1) + 2.0 * b * P * P * (2.0 * u * u + u1)
              + inv_q * (c * P * ((u + w) ** 2 + u1 + w1) + d * (w * w + w1)))
    return f, df


def gprime(coeffs: GCoefficients, alpha, beta, channel: ch.ChannelParams, device=None):
    """Analytic ``dG/dalpha`` at fixed bandwidth share."""
    hs = ch.h_s(beta, channel, device)
    hv = ch.h_v(beta, channel, device)
    out = g_alpha_derivs(coeffs.a, coeffs.b, coeffs.c, coeffs.d, hs, hv, alpha)
    return out if np.ndim(out) else float(out)


def _gp_scalar(a, b, c, d, hs, hv, x):
    om = 1.0 - x
    P = math.exp(hv / om) if hv / om > -745 else 0.0
    u = hv / om ** 2
    u1 = 2.0 * hv / om ** 3
    w = hs / x ** 2
    w1 = -2.0 * hs / x ** 3
    inv_q = _sat_exp(-hs / x)
    f = P * u * (a + 2.0 * b * P) + inv_q * (c * P * (u + w) + d * w)
    df = (a * P * (u * u + u1) + 2.0 * b * P * P * (2.0 * u * u + u1)
          + inv_q * (c * P * ((u + w) ** 2 + u1 + w1) + d * (w * w + w1)))
    return f, df


def _refine_root(fn, xl, xh, fl, tol_f, maxit=200):
    """Safeguarded Newton on a bracket [xl, xh] where ``fn`` changes sign."""
    if fl > 0:  # orient so fn(xl) < 0 < fn(xh)
        xl, xh = xh, xl
    x = 0.5 * (xl + xh)
    dxold = abs(xh - xl)
    dx = dxold
    f, df = fn(x)
    best_x, best_f = x, f
    for _ in range(maxit):
        if abs(f) <= tol_f:
            break
        if f < 0:
            xl = x
        else:
            xh = x
        newton_ok = (math.isfinite(f) and math.isfinite(df) and df != 0.0
                     and ((x - xh) * df - f) * ((x - xl) * df - f) < 0.0
                     and abs(2.0 * f) <= abs(dxold * df))
        dxold = dx
        if newton_ok:
            dx = f / df
            x_new = x - dx
        else:
            dx = 0.5 * (xh - xl)
            x_new = xl + dx
        if x_new == x or abs(xh - xl) <= 4e-16 * max(abs(x), 1e-300):
            break
        x = x_new
        f, df = fn(x)
        if abs(f) < abs(best_f):
            best_x, best_f = x, f
    return best_x, best_f


def scan_grid(m: int = 64, edge_points: int = 24) -> np.ndarray:
    """Interior scan points: ``m`` uniform subintervals plus geometric edge refinement.

    The extra points resolve the boundary layers of width ~|H_s| near 0 and
    ~|H_v| near 1, which can be much narrower than 1/m.
    """
    uniform = np.arange(1, m) / m
    near0 = np.geomspace(1e-9, 1.0 / m, edge_points, endpoint=False)
    near1 = 1.0 - np.geomspace(1e-12, 1.0 / m, edge_points, endpoint=False)
    return np.unique(np.concatenate([near0, uniform, near1]))


@dataclass
class PowerInfo:
    roots: List[np.ndarray] = field(default_factory=list)
    residuals: List[np.ndarray] = field(default_factory=list)
    candidate_values: List[np.ndarray] = field(default_factory=list)


def optimize_power_from_exponents(a, b, c, d, hs, hv, m: int = 64, gamma1: float = GAMMA1,
                                  info: PowerInfo | None = None) -> np.ndarray:
    a, b, c, d, hs, hv = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (a, b, c, d, hs, hv))
    grid = scan_grid(m)
    fvals = g_alpha_derivs(a[:, None], b[:, None], c[:, None], d[:, None], hs[:, None], hv[:, None], grid[None, :])
    alphas = np.ones(a.size)
    for k in range(a.size):
        args = (a[k], b[k], c[k], d[k], hs[k], hv[k])
        fk = fvals[k]
        sgn = np.sign(fk)
        roots, resid = [], []
        for i in np.flatnonzero(sgn == 0):
            roots.append(grid[i])
            resid.append(0.0)
        for i in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
            x, f = _refine_root(lambda x: _gp_scalar(*args, x), grid[i], grid[i + 1], fk[i], gamma1)
            roots.append(x)
            resid.append(abs(f))
        cands = np.array(roots + [1.0])
        vals = np.asarray(g_from_exponents(a[k], b[k], c[k], d[k], hs[k], hv[k], cands), dtype=float)
        best = np.min(vals)
        tol = 1e-12 * max(1.0, abs(best))
        tied = np.flatnonzero(vals <= best + tol)
        alphas[k] = cands[tied[np.argmin(cands[tied])]]
        if info is not None:
            info.roots.append(np.array(roots))
            info.residuals.append(np.array(resid))
            info.candidate_values.append(vals)
    return alphas


def optimize_power(coeffs: GCoefficients, beta, channel: ch.ChannelParams, m: int = 64,
                   gamma1: float = GAMMA1, return_info: bool = False):
    """Per-device argmin of G over {stationary points in (0, 1)} U {1} at fixed beta."""
    beta = np.asarray(beta, dtype=float)
    if beta.size != channel.num_devices:
        raise ValueError("need one bandwidth share per device")
    hs = ch.h_s(beta, channel)
    hv = ch.h_v(beta, channel)
    info = PowerInfo() if return_info else None
    alphas = optimize_power_from_exponents(coeffs.a, coeffs.b, coeffs.c, coeffs.d, hs, hv, m, gamma1, info)
    return (alphas, info) if return_info else alphas
