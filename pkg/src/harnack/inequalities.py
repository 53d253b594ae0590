"""Ball-wise Poincare and Sobolev constants, tau, and the constant ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .forms import EnergyForm, energy_measure
from .space import Ball, Space, ball, ball_measures, doubling_c0, estimate_doubling

DENSE_LIMIT = 2500


class DegenerateFormError(ValueError):
    pass


@dataclass
class PoincareCertificate:
    """``Var_m(u; B_R) <= ratio * E(u; B_kR)`` with ``ratio = (c1 R)**2``.

    ``E(u; B_kR)`` is the energy of the edges inside the dilated ball, which
    never exceeds the energy-measure mass of that ball.
    """

    ball: Ball
    k_dil: float
    c1_value: float
    ratio: float
    witness: np.ndarray
    outer_members: np.ndarray
    method: str

    def variance(self, form: EnergyForm, u) -> float:
        u = np.asarray(u, dtype=float)
        idx = self.ball.members
        m = form.space.measure[idx]
        mean = np.dot(m, u[idx]) / m.sum()
        return float(np.dot(m, (u[idx] - mean) ** 2))

    def energy(self, form: EnergyForm, u) -> float:
        return _edge_quadratic(form, self.outer_members, u)

    def holds(self, form: EnergyForm, u, rtol: float = 1e-10) -> bool:
        var = self.variance(form, u)
        return var <= self.ratio * self.energy(form, u) * (1 + rtol) + 1e-300


def _induced_laplacian(form: EnergyForm, members: np.ndarray) -> sparse.csr_matrix:
    n = form.n_vertices
    local = np.full(n, -1, dtype=np.int64)
    local[members] = np.arange(len(members))
    a, b = form.space.edges.T
    keep = (local[a] >= 0) & (local[b] >= 0)
    la, lb, c = local[a[keep]], local[b[keep]], form.conductance[keep]
    k = len(members)
    off = sparse.coo_matrix((np.r_[-c, -c], (np.r_[la, lb], np.r_[lb, la])), shape=(k, k))
    diag = np.bincount(la, c, k) + np.bincount(lb, c, k)
    return (off + sparse.diags(diag)).tocsr()


def _edge_quadratic(form: EnergyForm, members: np.ndarray, u) -> float:
    u = np.asarray(u, dtype=float)
    inside = np.zeros(form.n_vertices, dtype=bool)
    inside[members] = True
    a, b = form.space.edges.T
    keep = inside[a] & inside[b]
    du = u[a[keep]] - u[b[keep]]
    return float(np.sum(form.conductance[keep] * du * du))


def _reduced_operator(form: EnergyForm, inner: np.ndarray, outer: np.ndarray):
    """Energy operator on the inner ball after harmonic elimination of the annulus.

    Returns ``(S, extend)`` where ``extend`` maps inner values to outer values.
    """
    L = _induced_laplacian(form, outer)
    pos = np.searchsorted(outer, inner)
    rest = np.setdiff1d(np.arange(len(outer)), pos)
    if len(rest) == 0:
        return L, lambda x: x
    L_ii = L[pos][:, pos]
    L_ir = L[pos][:, rest]
    L_rr = L[rest][:, rest].tocsc()
    lu = splinalg.splu(L_rr)
    X = lu.solve(L_ir.T.toarray())
    S = L_ii.toarray() - L_ir @ X

    def extend(x):
        out = np.empty(len(outer))
        out[pos] = x
        out[rest] = -X @ x
        return out

    return S, extend


def poincare_constant(form: EnergyForm, b: Ball, k_dil: float = 1.0,
                      method: str = "auto") -> PoincareCertificate:
    """Sharp Poincare constant of the ball as a generalized eigenvalue problem.

    ``(c1 R)**2 = 1 / lambda_2`` where ``lambda_2`` is the smallest nonzero
    eigenvalue of ``S x = lambda M x`` (S: energy on B_kR reduced to B_R,
    M: diagonal vertex measure on B_R).  ``method`` is ``dense`` (full
    symmetric eigensolver), ``lanczos`` (shift-invert Lanczos) or ``auto``.
    """
    if k_dil < 1:
        raise ValueError("k_dil must be >= 1")
    space = form.space
    inner = b.members
    outer = inner if k_dil == 1 else ball(space, b.center, k_dil * b.radius).members
    if len(inner) == 1:
        witness = np.zeros(space.n_vertices)
        return PoincareCertificate(b, k_dil, 0.0, 0.0, witness, outer, "trivial")
    S, extend = _reduced_operator(form, inner, outer)
    mass = space.measure[inner]
    if method == "auto":
        method = "dense" if len(inner) <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        Sd = S.toarray() if sparse.issparse(S) else np.asarray(S)
        vals, vecs = scipy.linalg.eigh(Sd, np.diag(mass), subset_by_index=[0, 1])
    elif method == "lanczos":
        scale = float(np.abs(S).max() / mass.min())
        M = sparse.diags(mass)
        Ss = S if sparse.issparse(S) else sparse.csr_matrix(S)
        vals, vecs = splinalg.eigsh(Ss.tocsc(), k=2, M=M.tocsc(), sigma=-1e-3 * scale,
                                    which="LM", tol=1e-14)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    lam = float(vals[1])
    top = float(np.abs(S).max()) / float(mass.min())
    if not lam > 1e-12 * top:
        raise DegenerateFormError("degenerate form on ball")
    vec = vecs[:, 1]
    vec = vec - np.dot(mass, vec) / mass.sum()
    vec = vec / np.sqrt(np.dot(mass, vec**2))
    witness = np.zeros(space.n_vertices)
    witness[outer] = extend(vec)
    ratio = 1.0 / lam
    return PoincareCertificate(b, k_dil, math.sqrt(ratio) / b.radius, ratio, witness, outer, method)


def monotone_envelope(values) -> np.ndarray:
    """Smallest nonincreasing majorant of ``values`` (ordered by increasing radius)."""
    values = np.asarray(values, dtype=float)
    return np.maximum.accumulate(values[::-1])[::-1]


def c1_profile(form: EnergyForm, center: int, radii, k_dil: float = 1.0):
    radii = np.asarray(sorted(radii), dtype=float)
    raw = np.array([poincare_constant(form, ball(form.space, center, r), k_dil).c1_value for r in radii])
    return radii, raw, monotone_envelope(raw)


def compute_tau(space: Space, b: Ball, c0_field) -> float:
    """``tau = (sup over B(x, 2R) of 1/c0)**(1/2)``; balls larger than the space are
    simply intersected with it (see :func:`tau_clipped`)."""
    c0_field = np.asarray(c0_field, dtype=float)
    big = ball(space, b.center, 2 * b.radius)
    vals = c0_field[big.members]
    if np.any(np.isnan(vals)):
        raise ValueError("c0 field not populated on B(x, 2R)")
    if np.any(vals <= 0):
        raise ValueError("c0 must be positive")
    return float(math.sqrt(np.max(1.0 / vals)))


def tau_clipped(space: Space, b: Ball) -> bool:
    return 2 * b.radius > space.r0


def sobolev_exponents(nu: float, q: float | None = None) -> tuple[float, float]:
    """Return ``(q, sigma)``: ``q = 2 nu/(nu - 2)`` when ``nu > 2``, else the
    configured ``q`` (default 4); ``sigma = q/2``."""
    if nu > 2:
        q = 2 * nu / (nu - 2)
    elif q is None:
        q = 4.0
    sigma = q / 2
    if not sigma > 1:
        raise ValueError(f"sigma = {sigma} must exceed 1")
    return float(q), float(sigma)


@dataclass
class ConstantLedger:
    nu: float
    c0_field: np.ndarray
    radii: np.ndarray
    c1_raw: np.ndarray
    c1_env: np.ndarray
    tau: float
    tau_clipped: bool
    q: float
    sigma: float
    k_dil: float
    c_abs: float
    center: int
    radius: float
    gamma: float = math.nan
    gamma1: float = math.nan
    notes: dict = field(default_factory=dict)

    @property
    def s_exp(self) -> float:
        return 2 * self.sigma

    @property
    def d(self) -> float:
        """Exponent sigma/(sigma-1) in the growth hypothesis of the abstract Moser lemma."""
        return self.sigma / (self.sigma - 1)

    def c1(self, r: float) -> float:
        """Envelope value at the largest profiled radius not exceeding ``r``."""
        i = np.searchsorted(self.radii, r * (1 + 1e-12), side="right") - 1
        if i < 0:
            # smaller balls are the same single vertex, whose raw constant is 0
            if self.c1_raw[0] == 0:
                return float(self.c1_env[0])
            raise KeyError(f"radius {r} below the profiled range starting at {self.radii[0]}")
        return float(self.c1_env[i])

    @property
    def mu(self) -> float:
        return self.tau**3 * self.c1(self.radius / 2)

    @property
    def mu_prime(self) -> float:
        return self.tau * self.c1(self.radius / 2)

    def mu_at(self, rho: float) -> float:
        """``mu(x, rho) = tau**3 c1(rho/2)``."""
        return self.tau**3 * self.c1(rho / 2)

    @property
    def log_harnack_bound(self) -> float:
        return self.gamma * self.mu**2 * self.mu_prime


def build_ledger(form: EnergyForm, center: int, radius: float, *, c1_radii=None,
                 doubling_radii=None, doubling_centers=None, nu: float | None = None,
                 q: float | None = None, k_dil: float = 1.0, c_abs: float | None = None) -> ConstantLedger:
    """Measure every structural constant needed for a Harnack run on B(center, radius)."""
    from .moser import C_ABS, gamma_constant

    space = form.space
    c_abs = C_ABS if c_abs is None else float(c_abs)
    if doubling_radii is None:
        doubling_radii = [r for r in (radius / 4, radius / 2, radius) if r <= space.r0]
    doubling_radii = np.asarray(sorted(doubling_radii), dtype=float)
    if doubling_centers is None:
        doubling_centers = np.arange(space.n_vertices)
    est = estimate_doubling(space, doubling_centers, doubling_radii, nu=nu)
    c0 = est.c0_field(space.n_vertices)
    b = ball(space, center, radius)
    big = ball(space, center, 2 * radius).members
    missing = big[np.isnan(c0[big])]
    if len(missing):
        meas = ball_measures(space, missing, doubling_radii)
        c0[missing] = doubling_c0(meas, doubling_radii, est.nu_hat)
    tau = compute_tau(space, b, c0)
    if c1_radii is None:
        c1_radii = [radius / 8, radius / 4, radius / 2, radius]
    radii, raw, env = c1_profile(form, center, [r for r in c1_radii if r > 0], k_dil)
    qv, sigma = sobolev_exponents(est.nu_hat, q)
    ledger = ConstantLedger(
        nu=est.nu_hat, c0_field=c0, radii=radii, c1_raw=raw, c1_env=env, tau=tau,
        tau_clipped=tau_clipped(space, b), q=qv, sigma=sigma, k_dil=k_dil, c_abs=c_abs,
        center=int(center), radius=float(radius),
        notes={
            "nu": "fixed by config" if nu is not None else "max growth exponent over sampled centers",
            "c0": f"min over radius pairs {list(doubling_radii)}",
            "c1": "sharp ball eigenvalue, nonincreasing envelope",
            "tau": "sup of 1/c0 over B(x, 2R), square root",
            "q": "2 nu/(nu-2)" if est.nu_hat > 2 else ("config" if q is not None else "default 4"),
        },
    )
    ledger.gamma1 = 8 * c_abs
    ledger.gamma = gamma_constant(ledger.d, ledger.gamma1).value
    return ledger


@dataclass
class SobolevReport:
    ratios: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if len(self.ratios) else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))

    @property
    def min_slack(self) -> float:
        return float(np.min(self.rhs - self.lhs)) if len(self.lhs) else math.inf


def sobolev_check(form: EnergyForm, b: Ball, ledger: ConstantLedger, trial_fns) -> SobolevReport:
    """Check ``avg_B(|u|^s)^(1/s) <= tau^3 c1(R) R avg_B(mu(u,u))^(1/2)`` for each trial.

    Trials must vanish off the ball; ``mu(u, u)`` is integrated over the ball.
    """
    space = form.space
    inside = b.mask(space.n_vertices)
    m = space.measure
    s = ledger.s_exp
    const = ledger.tau**3 * ledger.c1(b.radius) * b.radius
    lhs, rhs = [], []
    for u in trial_fns:
        u = np.asarray(u, dtype=float)
        if np.any(u[~inside] != 0):
            raise ValueError("trial function not supported in the ball")
        au = np.abs(u[inside])
        peak = au.max() if len(au) else 0.0
        if peak == 0:
            lhs.append(0.0)
        else:
            lhs.append(peak * (np.dot(m[inside], (au / peak) ** s) / b.measure) ** (1 / s))
        dens = energy_measure(form, u, u)[inside]
        rhs.append(const * math.sqrt(max(float(np.dot(dens, np.ones_like(dens))), 0.0) / b.measure))
    lhs, rhs = np.array(lhs), np.array(rhs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lhs == 0, 0.0, lhs / rhs)
    return SobolevReport(ratios, lhs, rhs)
