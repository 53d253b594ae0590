"""Moser iteration: truncated powers, the sup/log lemmas, the abstract Moser
lemma and assembly/verification of the Harnack bound.

Bounds of the form ``exp(gamma mu^2 mu')`` overflow doubles for realistic
constants, so every report carries the exponent (``log_bound``) and compares
in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forms import EnergyForm, energy_measure, make_cutoff
from .inequalities import ConstantLedger
from .solve import HarmonicSolver, Sampler, classify, collar
from .space import Ball, ball

# Absorbed absolute constant; calibrated against the iteration product bound.
C_ABS = 32.0
SERIES_RTOL = 1e-12
LADDER_MAX_EXPONENT = 64.0
LADDER_MIN_INCREMENT = 1e-14


class MoserError(ValueError):
    pass


# -- truncated powers and schedules ---------------------------------------


@dataclass(frozen=True)
class TruncatedPower:
    """``H_M(t) = t**beta`` on ``[0, M]``, continued affinely beyond ``M``."""

    beta: float
    M: float

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.M <= 0:
            raise ValueError("M must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("H_M is defined for t >= 0")
        b, M = self.beta, self.M
        return np.where(t <= M, t**b, M**b + b * M ** (b - 1) * (t - M))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("H_M is defined for t >= 0")
        b, M = self.beta, self.M
        return np.where(t <= M, b * t ** (b - 1), b * M ** (b - 1))

    @property
    def derivative_bound(self) -> float:
        return self.beta * self.M ** (self.beta - 1)


@dataclass(frozen=True)
class IterationSchedule:
    """Radii ``s_j = alpha + (1-alpha)/(j+1)`` and exponents ``sigma**j p``."""

    alpha: float
    p: float
    sigma: float

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1:
            raise ValueError("alpha must lie in [1/2, 1)")
        if not self.sigma > 1:
            raise MoserError("supercriticality lost: sigma must exceed 1")

    def s(self, j):
        j = np.asarray(j, dtype=float)
        return self.alpha + (1 - self.alpha) / (j + 1)

    def a(self, j):
        """``s_j / |s_{j+1} - s_j|``."""
        return self.s(j) / np.abs(self.s(np.asarray(j) + 1) - self.s(j))

    def exponent(self, j):
        return self.p * float(self.sigma) ** np.asarray(j, dtype=float)

    @property
    def j_max(self) -> int:
        """First j with exponent above 64 or a radius increment below 1e-14."""
        j = 0
        while True:
            if abs(self.exponent(j)) > LADDER_MAX_EXPONENT:
                return j
            if abs(self.s(j) - self.s(j + 1)) < LADDER_MIN_INCREMENT:
                return j
            j += 1


# -- constants ------------------------------------------------------------


@dataclass
class GammaSeries:
    value: float
    partial_sum: float
    tail_bound: float
    terms: int
    d: float
    gamma1: float


def _log_series_term(j: int, d: float) -> float:
    return j * math.log(0.75) + 2 * d * math.log(2.0 * (j + 1) * (j + 2))


def gamma_constant(d: float, gamma1: float = 1.0, rtol: float = SERIES_RTOL) -> GammaSeries:
    """``gamma = gamma1 * sum_j (3/4)**j (2(j+1)(j+2))**(2d)``.

    Terms have the decreasing ratio ``3/4 ((j+3)/(j+1))**(2d)``; once that ratio
    is below one the tail after term J is at most ``t_{J+1} / (1 - ratio_{J+1})``.
    """
    if d <= 0:
        raise ValueError("d must be positive")
    terms = []
    j = 0
    while True:
        terms.append(math.exp(_log_series_term(j, d)))
        nxt = j + 1
        ratio = 0.75 * ((nxt + 2) / (nxt)) ** (2 * d)
        if ratio < 1:
            tail = math.exp(_log_series_term(nxt, d)) / (1 - ratio)
            total = math.fsum(terms)
            if tail < rtol * total:
                break
        j += 1
    total = math.fsum(terms)
    return GammaSeries(gamma1 * total, total, tail, len(terms), float(d), float(gamma1))


def _product_weights(schedule: IterationSchedule, rtol: float = 1e-17, j_cap: int = 100_000):
    j, out = 0, []
    while j < j_cap:
        w = 2.0 / schedule.exponent(j)
        out.append(w)
        if j > 10 and w * (j + 1) * math.log(schedule.sigma + 1) < rtol:
            break
        j += 1
    return np.array(out)


@dataclass
class ProductBound:
    log_product: float
    log_bound: float
    terms: int

    @property
    def holds(self) -> bool:
        return self.log_product <= self.log_bound


def product_bound(schedule: IterationSchedule, tau: float, c1_fn, r: float, nu: float | None = None,
                  c_abs: float = C_ABS, c: float = 1.0) -> ProductBound:
    """Compare the iteration product with its closed form, in logs.

    product: ``prod_j [c tau^3 c1(s_j r) (s_{j+1}/s_j)**(nu/2) (sigma^j p a_j)]**(2/(sigma^j p))``
    bound:   ``(c_abs c1(r/2) tau^3 / (1-alpha))**((2/p) sigma/(sigma-1))``

    ``nu`` defaults to ``2 sigma/(sigma-1)``, the dimension with ``q = 2 sigma``.
    """
    sig = schedule.sigma
    if nu is None:
        nu = 2 * sig / (sig - 1)
    w = _product_weights(schedule)
    j = np.arange(len(w), dtype=float)
    s_j, s_next = schedule.s(j), schedule.s(j + 1)
    c1_vals = np.array([c1_fn(x * r) for x in s_j])
    log_bracket = (math.log(c) + 3 * math.log(tau) + np.log(c1_vals)
                   + 0.5 * nu * np.log(s_next / s_j)
                   + np.log(schedule.exponent(j) * schedule.a(j)))
    log_product = math.fsum(w * log_bracket)
    expo = (2 / schedule.p) * sig / (sig - 1)
    log_bound = expo * math.log(c_abs * c1_fn(r / 2) * tau**3 / (1 - schedule.alpha))
    return ProductBound(log_product, log_bound, len(w))


def lemma_exponent(sigma: float) -> float:
    """Exponent ``2 sigma/(sigma-1)`` of the sup-bound prefactor."""
    if not sigma > 1:
        raise MoserError("supercriticality lost: sigma must exceed 1")
    return 2 * sigma / (sigma - 1)


# -- helpers --------------------------------------------------------------


def _avg_power(u: np.ndarray, m: np.ndarray, e: float) -> float:
    """``(m-average of u**e)**(1/e)`` for positive u, stable for large |e|."""
    if e > 0:
        peak = float(u.max())
        if peak == 0:
            return 0.0
        return peak * float(np.dot(m, (u / peak) ** e) / m.sum()) ** (1 / e)
    low = float(u.min())
    return low * float(np.dot(m, (u / low) ** e) / m.sum()) ** (1 / e)


def _restrict(u: np.ndarray, b: Ball) -> np.ndarray:
    vals = np.asarray(u, dtype=float)[b.members]
    if not np.all(np.isfinite(vals)):
        raise ValueError("u must be finite on the ball")
    return vals


# -- lemma checks ---------------------------------------------------------


@dataclass
class SupBoundReport:
    bound: float
    measured: float
    prefactor: float
    mean_power: float
    cascade: list = field(default_factory=list)
    j_max: int = 0
    kind: str = ""

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound

    @property
    def slack(self) -> float:
        return self.bound - self.measured


def subsolution_sup_bound(form: EnergyForm, b: Ball, u, schedule: IterationSchedule,
                          ledger: ConstantLedger) -> SupBoundReport:
    """Sup bound for a nonnegative subsolution on ``B_alpha``:

    ``(sup_{B_alpha} u)**p <= (c tau^3 c1(r/2) / (1-alpha))**(2 sigma/(sigma-1)) avg_B(u**p)``.

    The measured ladder of norms ``avg_{B_{s_j}}(u**(sigma^j p))**(1/(sigma^j p))``
    is recorded in ``cascade``.
    """
    expo = lemma_exponent(schedule.sigma)
    if schedule.p < 2:
        raise ValueError("p must be >= 2")
    cls = classify(form, b, u)
    if cls.kind not in ("harmonic", "subsolution"):
        raise MoserError(f"input is not a subsolution (classified {cls.kind!r})")
    vals = _restrict(u, b)
    if np.any(vals < 0):
        raise ValueError("u must be nonnegative")
    space = form.space
    m = space.measure[b.members]
    r, alpha, p = b.radius, schedule.alpha, schedule.p
    prefactor = (ledger.c_abs * ledger.tau**3 * ledger.c1(r / 2) / (1 - alpha)) ** expo
    mean_power = float(np.dot(m, vals**p) / b.measure)
    inner = ball(space, b.center, alpha * r)
    measured = float(np.max(np.asarray(u)[inner.members])) ** p
    cascade = []
    for j in range(schedule.j_max + 1):
        bj = ball(space, b.center, float(schedule.s(j)) * r)
        e = float(schedule.exponent(j))
        cascade.append((j, float(schedule.s(j)), e,
                        _avg_power(np.asarray(u)[bj.members], space.measure[bj.members], e)))
    return SupBoundReport(prefactor * mean_power, measured, prefactor, mean_power, cascade,
                          schedule.j_max, cls.kind)


def all_p_bound(form: EnergyForm, b: Ball, u, p: float, schedule: IterationSchedule,
                ledger: ConstantLedger) -> SupBoundReport:
    """Sup of ``u**p`` on ``B_alpha`` for any real ``p <= 2`` other than 0, 1:

    ``sup u**p <= ((c tau^3 c1(r/2) |p| + 1)/(1-alpha))**(2 sigma/(sigma-1)) avg_B(u**p)``.

    For negative p the left side is ``(inf u)**p``.
    """
    if p in (0, 1):
        raise MoserError("excluded exponent")
    if p > 2:
        raise ValueError("p must be <= 2")
    expo = lemma_exponent(schedule.sigma)
    vals = _restrict(u, b)
    if np.any(vals <= 0):
        raise ValueError("u must be bounded below by a positive delta")
    space = form.space
    m = space.measure[b.members]
    r, alpha = b.radius, schedule.alpha
    prefactor = ((ledger.c_abs * ledger.tau**3 * ledger.c1(r / 2) * abs(p) + 1) / (1 - alpha)) ** expo
    mean_power = float(np.dot(m, vals**p) / b.measure)
    inner = ball(space, b.center, alpha * r)
    measured = float(np.max(np.asarray(u)[inner.members] ** p))
    return SupBoundReport(prefactor * mean_power, measured, prefactor, mean_power, kind="positive")


@dataclass
class LogWeakReport:
    k: float
    lambdas: np.ndarray
    tail: np.ndarray
    envelope: np.ndarray
    C: float
    ball_alpha: Ball
    log_u: np.ndarray
    weights: np.ndarray
    log_energy: float = math.nan
    energy_bound: float = math.nan

    def tail_fn(self, lam: float) -> float:
        dev = np.abs(self.log_u - math.log(self.k))
        return float(np.dot(self.weights, dev > lam))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.tail <= self.envelope))

    @property
    def energy_passed(self) -> bool:
        return bool(self.log_energy <= self.energy_bound) if np.isfinite(self.energy_bound) else True


def log_mean(space, b: Ball, u) -> float:
    """Normaliser k with ``log k`` the m-average of ``log u`` over the ball."""
    vals = _restrict(u, b)
    if np.any(vals <= 0):
        raise ValueError("u must be positive on the ball")
    m = space.measure[b.members]
    return math.exp(math.fsum(m * np.log(vals)) / math.fsum(m))


def log_weak_estimate(form: EnergyForm, b: Ball, u, ledger: ConstantLedger, alpha: float = 0.5,
                      lambdas=(0.5, 1.0, 2.0, 4.0), require_supersolution: bool = True,
                      energy_check: bool = True) -> LogWeakReport:
    """Weak-L1 control of ``log(u/k)`` on ``B_alpha = B(x, alpha r)``.

    ``m({|log(u/k)| > lam} & B_alpha) <= C/lam m(B_alpha)`` with
    ``C = c tau c1(r) / (1-alpha)``.  With ``energy_check`` the energy of
    ``log u`` on ``B_alpha`` is compared with ``C_cut m(B_alpha)/((1-alpha) r)**2``.
    """
    if not 0.5 <= alpha < 1:
        raise ValueError("alpha must lie in [1/2, 1)")
    space = form.space
    u = np.asarray(u, dtype=float)
    if require_supersolution:
        cls = classify(form, b, u)
        if cls.kind not in ("harmonic", "supersolution"):
            raise MoserError(f"input is not a supersolution (classified {cls.kind!r})")
    b_alpha = ball(space, b.center, alpha * b.radius)
    vals = _restrict(u, b_alpha)
    if np.any(vals <= 0):
        raise ValueError("u must be positive")
    k = log_mean(space, b_alpha, u)
    m = space.measure[b_alpha.members]
    log_u = np.log(vals)
    dev = np.abs(log_u - math.log(k))
    lambdas = np.asarray(lambdas, dtype=float)
    tail = np.array([float(np.dot(m, dev > lam)) for lam in lambdas])
    C = ledger.c_abs * ledger.tau * ledger.c1(b.radius) / (1 - alpha)
    envelope = C / lambdas * b_alpha.measure
    report = LogWeakReport(k, lambdas, tail, envelope, C, b_alpha, log_u, m)
    if energy_check:
        dom = np.r_[b.members, collar(space, b)]
        if np.all(np.isfinite(u[dom])) and np.all(u[dom] > 0):
            lu = np.zeros(space.n_vertices)
            lu[dom] = np.log(u[dom])
            dens = energy_measure(form, lu, lu)
            report.log_energy = float(dens[b_alpha.members].sum())
            cut = make_cutoff(form, b.center, b.radius, alpha, 1.0)
            report.energy_bound = cut.c_cut * b_alpha.measure / ((1 - alpha) * b.radius) ** 2
    return report


# -- abstract Moser lemma -------------------------------------------------


@dataclass
class MoserBound:
    gamma1: float
    gamma: float
    d: float
    c_abs: float
    mu: float
    mu_prime: float
    log_bound: float
    phi_half: float = 0.0
    chain: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound) if self.log_bound < 709 else math.inf

    @property
    def passed(self) -> bool:
        return self.phi_half <= self.log_bound


def _phi_lookup(s_grid: np.ndarray, phi: np.ndarray, s: float) -> float:
    """Upper value for phi(s): phi at the first profiled radius >= s."""
    i = int(np.searchsorted(s_grid, s - 1e-15, side="left"))
    return float(phi[min(i, len(phi) - 1)])


def moser_abstract_bound(phi_s, phi_values, mu: float, mu_prime: float, d: float,
                         c: float = C_ABS, steps: int = 60) -> MoserBound:
    """``sup_{B_1/2} f <= exp(gamma mu^2 mu')`` with ``gamma1 = 8c``.

    ``phi_values[i] = sup over B_{phi_s[i]} of log f`` on radii in ``[1/2, 1]``
    (ending at 1).  The finite contraction chain along ``s_j = 1 - 1/(2(1+j))``
    is evaluated and stored in ``chain``.
    """
    if mu <= 0 or mu_prime <= 0 or d <= 0 or c <= 0:
        raise ValueError("mu, mu_prime, d and c must be positive")
    s_grid = np.asarray(phi_s, dtype=float)
    phi = np.asarray(phi_values, dtype=float)
    if s_grid.shape != phi.shape or len(s_grid) == 0:
        raise ValueError("phi profile needs matching radii and values")
    if np.any(np.diff(s_grid) <= 0) or s_grid[0] < 0.5 or abs(s_grid[-1] - 1.0) > 1e-12:
        raise ValueError("phi radii must increase from >= 1/2 up to 1")
    if np.any(np.diff(phi) < 0):
        raise MoserError("φ must be nondecreasing")
    gamma1 = 8.0 * c
    series = gamma_constant(d, gamma1)
    scale = mu**2 * mu_prime
    log_bound = series.value * scale
    j = np.arange(steps)
    terms = np.exp(j * math.log(0.75) + 2 * d * np.log(2.0 * (j + 1) * (j + 2)))
    partial = np.concatenate([[0.0], np.cumsum(terms)])
    s_seq = 1 - 1 / (2 * (1 + np.arange(steps + 1)))
    phi_k = np.array([_phi_lookup(s_grid, phi, s) for s in s_seq])
    chain = 0.75 ** np.arange(steps + 1) * np.maximum(phi_k, 0) + gamma1 * scale * partial
    phi_half = _phi_lookup(s_grid, phi, 0.5)
    return MoserBound(gamma1, series.value, float(d), float(c), float(mu), float(mu_prime),
                      float(log_bound), phi_half, chain)


# -- Harnack verification -------------------------------------------------


@dataclass
class HarnackReport:
    rows: list
    log_bound: float
    excluded: int
    ball: Ball

    @property
    def ratios(self) -> np.ndarray:
        return np.array([row["ratio"] for row in self.rows])

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.rows else math.nan

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound) if self.log_bound < 709 else math.inf

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(row["pass"] for row in self.rows)


def harnack_sample(solver: HarmonicSolver, ledger: ConstantLedger, g: np.ndarray,
                   alpha: float = 0.5):
    """Solve once and return ``(sup, inf, k)`` over the half ball, or None if inf <= 0."""
    sol = solver.solve(g)
    u = sol.u
    space = solver.form.space
    b = solver.ball
    half = ball(space, b.center, b.radius / 2)
    vals = u[half.members]
    lo, hi = float(vals.min()), float(vals.max())
    if not lo > 0:
        return None
    k_ball = ball(space, b.center, 1.5 * alpha * b.radius)
    k = log_mean(space, k_ball, u)
    return hi, lo, k


def harnack_verify(form: EnergyForm, b: Ball, sampler: Sampler, ledger: ConstantLedger,
                   n_samples: int, delta: float = 1e-6, seed: int = 0,
                   alpha: float = 0.5) -> HarnackReport:
    """Sample positive boundary data, solve, and compare ``sup/inf`` on the half ball
    with ``exp(gamma mu^2 mu')``."""
    if b.radius > form.space.r0:
        raise ValueError("Harnack ball radius exceeds R0")
    solver = HarmonicSolver(form, b)
    rng = np.random.default_rng(seed)
    log_bound = ledger.log_harnack_bound
    rows, excluded = [], 0
    for i in range(n_samples):
        g = sampler(rng, form.space, solver.collar, delta)
        out = harnack_sample(solver, ledger, g, alpha)
        if out is None:
            excluded += 1
            continue
        hi, lo, k = out
        ratio = hi / lo
        rows.append({
            "sample_id": i, "delta": delta, "sup": hi, "inf": lo, "k": k, "ratio": ratio,
            "log_ratio": math.log(ratio), "log_bound": log_bound,
            "pass": math.log(ratio) <= log_bound,
        })
    return HarnackReport(rows, log_bound, excluded, b)


def delta_trend(form: EnergyForm, b: Ball, sampler: Sampler, ledger: ConstantLedger,
                n_samples: int, deltas=(1e-4, 1e-5, 1e-6), seed: int = 0):
    """Max Harnack ratio for each delta (same seed) and the relative drift."""
    maxima = [harnack_verify(form, b, sampler, ledger, n_samples, dl, seed).max_ratio for dl in deltas]
    maxima = np.array(maxima)
    drift = float((maxima.max() - maxima.min()) / maxima.min())
    return maxima, drift
