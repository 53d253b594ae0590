"""Oscillation decay from the Harnack constant and the continuity criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .space import Ball, Space, ball

QUAD_RTOL = 1e-10


@dataclass
class OscillationProfile:
    """sup, inf and oscillation of u on concentric balls, radii descending."""

    center: int
    radii: np.ndarray
    M: np.ndarray
    m: np.ndarray
    gamma_mu: np.ndarray | None = None

    @property
    def omega(self) -> np.ndarray:
        return self.M - self.m


def oscillation_profile(space: Space, u, center: int, radii, gamma_mu_fn=None) -> OscillationProfile:
    u = np.asarray(u, dtype=float)
    radii = np.array(sorted(radii, reverse=True), dtype=float)
    M, m = [], []
    for r in radii:
        vals = u[ball(space, center, r).members]
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"u not finite on B(x, {r})")
        M.append(vals.max())
        m.append(vals.min())
    gm = None if gamma_mu_fn is None else np.array([gamma_mu_fn(r) for r in radii])
    return OscillationProfile(int(center), radii, np.array(M), np.array(m), gm)


def contraction_factor(harnack_exp: float) -> float:
    """``1 - exp(-h)``; equals 1 (no information) once ``exp(-h)`` underflows."""
    if harnack_exp < 0:
        raise ValueError("Harnack exponent must be nonnegative")
    return -math.expm1(-harnack_exp)


@dataclass
class OscillationStep:
    factor: float
    omega_r: float
    omega_R: float
    aux_ratios: tuple
    aux_passed: bool

    @property
    def passed(self) -> bool:
        """The decay inequality, required only when Harnack held for both
        auxiliary functions."""
        if not self.aux_passed:
            return True
        if self.omega_R == 0:
            return self.omega_r == 0
        return self.omega_r <= self.factor * self.omega_R


def oscillation_step(space: Space, u, ball_R: Ball, ball_r: Ball, harnack_exp: float) -> OscillationStep:
    """One step ``omega(r) <= (1 - exp(-h)) omega(4r)``.

    Harnack with exponent h is checked on ``B_r`` for ``M_R - u`` and ``u - m_R``.
    """
    if ball_R.center != ball_r.center or not math.isclose(ball_R.radius, 4 * ball_r.radius):
        raise ValueError("oscillation step needs concentric balls with R = 4r")
    u = np.asarray(u, dtype=float)
    big = u[ball_R.members]
    small = u[ball_r.members]
    if not (np.all(np.isfinite(big)) and np.all(np.isfinite(small))):
        raise ValueError("u must be finite on B_R")
    M_R, m_R = float(big.max()), float(big.min())
    omega_R = M_R - m_R
    omega_r = float(small.max() - small.min())
    factor = contraction_factor(harnack_exp)
    ratios, ok = [], True
    for aux in (M_R - small, small - m_R):
        lo, hi = float(aux.min()), float(aux.max())
        if hi == 0:
            ratios.append(1.0)
            continue
        if lo <= 0:
            ratios.append(math.inf)
            ok = False
            continue
        ratios.append(hi / lo)
        ok = ok and math.log(hi / lo) <= harnack_exp
    return OscillationStep(factor, omega_r, omega_R, tuple(ratios), ok)


def dyadic_chain(r: float, steps: int) -> np.ndarray:
    """Radii ``r, 4r, 16r, ...`` with ``steps`` factors of 4."""
    return r * 4.0 ** np.arange(steps + 1)


def chain_log_product(gamma_mu_fn: Callable[[float], float], radii) -> float:
    """``sum log(1 - exp(-gamma mu(rho)))`` over the inner radii of a 4-adic chain."""
    radii = np.sort(np.asarray(radii, dtype=float))
    return math.fsum(math.log(contraction_factor(gamma_mu_fn(rho))) for rho in radii[:-1])


def log_integral(gamma_mu_fn: Callable[[float], float], lo: float, hi: float) -> float:
    """``int_lo^hi exp(-gamma mu(rho)) d rho / rho`` via ``rho = e^t``."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    if lo == hi:
        return 0.0
    val, _ = integrate.quad(lambda t: math.exp(-gamma_mu_fn(math.exp(t))), math.log(lo), math.log(hi),
                            epsrel=QUAD_RTOL, epsabs=0.0, limit=200)
    return float(val)


@dataclass
class DecayModulus:
    integral: float
    multiplier: float
    bound: float
    verdict: str
    partial_integrals: np.ndarray


def continuity_verdict(gamma_mu_fn, R: float, decades: int = 3, r_min: float | None = None):
    """Divergence test for ``int_r^R exp(-gamma mu) d rho/rho`` as r -> 0.

    Partial integrals are taken at ``R 10**-k``; the tail looks divergent
    ("continuous") when they increase monotonically and the last decade
    increments decay no faster than 1/k.
    """
    n = decades if r_min is None else max(decades, int(math.floor(math.log10(R / r_min))))
    ks = np.arange(1, n + 1)
    partial = np.array([log_integral(gamma_mu_fn, R * 10.0 ** (-k), R) for k in ks])
    inc = np.diff(np.r_[0.0, partial])
    if np.any(inc <= 0):
        return "inconclusive", partial
    tail_k = ks[-3:] if len(ks) >= 3 else ks
    tail_inc = inc[-len(tail_k):]
    slope = np.polyfit(np.log(tail_k), np.log(tail_inc), 1)[0] if len(tail_k) > 1 else 0.0
    return ("continuous" if slope >= -1.0 else "inconclusive"), partial


def decay_modulus(gamma_mu_fn: Callable[[float], float], r: float, R: float, c: float = 1.0,
                  omega_R: float = 1.0, decades: int = 3) -> DecayModulus:
    """``omega(r) <= exp(-c int_{r/4}^R exp(-gamma mu(rho)) d rho/rho) omega(R)``."""
    if not 0 < r <= R / 4:
        raise ValueError("need 0 < r <= R/4")
    val = log_integral(gamma_mu_fn, r / 4, R)
    mult = math.exp(-c * val)
    verdict, partial = continuity_verdict(gamma_mu_fn, R, decades, r_min=r / 4)
    return DecayModulus(val, mult, mult * omega_R, verdict, partial)


def loglog_asymptotic(r: float, R: float, c: float = 1.0) -> float:
    """``c log(1/R) / log(1/r)``."""
    return c * math.log(1 / R) / math.log(1 / r)
