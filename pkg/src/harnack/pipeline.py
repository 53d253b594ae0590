"""Experiment orchestration shared by the command line and the test suite."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .forms import EnergyForm, build_form
from .inequalities import ConstantLedger, build_ledger
from .moser import (
    IterationSchedule, all_p_bound, gamma_constant, harnack_verify, log_mean, log_weak_estimate,
    moser_abstract_bound, subsolution_sup_bound,
)
from .oscillation import dyadic_chain, decay_modulus, oscillation_profile, oscillation_step
from .solve import HarmonicSolver, boundary_sampler
from .space import Space, ball, build_space


def fmt(x) -> str:
    """CSV cell: reals with 17 significant digits, ints and flags verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row[h]) for h in header])


def resolve_center(space: Space, center) -> int:
    if isinstance(center, (list, tuple)):
        if space.shape is None or len(center) != 2:
            raise ConfigError("grid-index centers need a grid space")
        i, j = (int(c) for c in center)
        n = space.shape[0]
        return i + n * j
    c = int(center)
    if not 0 <= c < space.n_vertices:
        raise ConfigError(f"center {c} outside the space")
    return c


@dataclass
class Experiment:
    cfg: RunConfig
    space: Space
    form: EnergyForm
    center: int
    _ledger: ConstantLedger | None = field(default=None, repr=False)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Experiment":
        try:
            space = build_space(cfg.space)
            form = build_form(space, cfg.operator)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad space/operator table: {exc}") from exc
        center = resolve_center(form.space, cfg.center)
        if cfg.radius > form.space.r0:
            raise ConfigError(f"ball radius {cfg.radius} exceeds R0 = {form.space.r0}")
        return cls(cfg, form.space, form, center)

    @property
    def ball(self):
        return ball(self.space, self.center, self.cfg.radius)

    @property
    def ledger(self) -> ConstantLedger:
        if self._ledger is None:
            opts = self.cfg.ledger
            r = self.cfg.radius
            c1_radii = opts.get("c1_radii")
            if c1_radii is None:
                c1_radii = sorted({1.0, r / 8, r / 4, r / 2, r})
            self._ledger = build_ledger(
                self.form, self.center, r, c1_radii=c1_radii,
                doubling_radii=opts.get("doubling_radii"),
                nu=opts.get("nu"), q=opts.get("q"), k_dil=float(opts.get("k_dil", 1.0)),
                c_abs=opts.get("c_abs"),
            )
        return self._ledger

    def sampler(self, kind=None, **params):
        return boundary_sampler(kind or self.cfg.sampler, **params)


# -- ledger ---------------------------------------------------------------

LEDGER_HEADER = ["radius", "c1_raw", "c1_envelope", "tau", "sigma", "q", "mu", "mu_prime", "nu",
                 "k_dil", "c_abs", "d", "gamma1", "gamma", "log_harnack_bound", "tau_clipped"]


def ledger_rows(led: ConstantLedger) -> list:
    """One row per profiled radius rho; mu, mu' and the log bound belong to a
    Harnack ball of radius 2 rho."""
    rows = []
    for r, raw, env in zip(led.radii, led.c1_raw, led.c1_env):
        mu = led.tau**3 * env
        mu_p = led.tau * env
        rows.append({
            "radius": float(r), "c1_raw": float(raw), "c1_envelope": float(env), "tau": led.tau,
            "sigma": led.sigma, "q": led.q, "mu": mu, "mu_prime": mu_p, "nu": led.nu,
            "k_dil": led.k_dil, "c_abs": led.c_abs, "d": led.d, "gamma1": led.gamma1,
            "gamma": led.gamma, "log_harnack_bound": led.gamma * mu**2 * mu_p,
            "tau_clipped": led.tau_clipped,
        })
    return rows


# -- Harnack --------------------------------------------------------------

HARNACK_HEADER = ["sample_id", "delta", "sup", "inf", "k", "ratio", "log_ratio", "bound",
                  "log_bound", "pass"]


@dataclass
class HarnackRun:
    reports: list
    deltas: list
    drift: float

    @property
    def rows(self) -> list:
        out = []
        for rep in self.reports:
            for row in rep.rows:
                out.append(dict(row, bound=rep.bound))
        return out

    @property
    def passed(self) -> bool:
        return all(rep.passed for rep in self.reports)

    @property
    def excluded(self) -> int:
        return sum(rep.excluded for rep in self.reports)


def run_harnack(exp: Experiment, samples: int | None = None) -> HarnackRun:
    cfg = exp.cfg
    n = cfg.samples if samples is None else samples
    sampler = exp.sampler(value=cfg.harnack.get("value", 1.0))
    deltas = cfg.deltas or [cfg.delta]
    reports = [harnack_verify(exp.form, exp.ball, sampler, exp.ledger, n, dl, cfg.seed) for dl in deltas]
    maxima = np.array([rep.max_ratio for rep in reports])
    drift = float((maxima.max() - maxima.min()) / maxima.min()) if len(maxima) > 1 else 0.0
    return HarnackRun(reports, deltas, drift)


# -- oscillation ----------------------------------------------------------

OSC_HEADER = ["r", "M_r", "m_r", "omega", "gamma_mu", "bound_multiplier", "decay_multiplier"]


@dataclass
class OscillationRun:
    profile: object
    steps: list
    rows: list
    verdict: str

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)


def run_oscillation(exp: Experiment) -> OscillationRun:
    opts = exp.cfg.oscillation
    r = float(opts.get("r", 2.0))
    n_steps = int(opts.get("steps", 2))
    radii = dyadic_chain(r, n_steps)
    R = float(radii[-1])
    if R > exp.space.r0:
        raise ConfigError(f"oscillation chain radius {R} exceeds R0 = {exp.space.r0}")
    led = exp.ledger
    outer = ball(exp.space, exp.center, R)
    solver = HarmonicSolver(exp.form, outer)
    rng = np.random.default_rng(exp.cfg.seed)
    g = boundary_sampler(opts.get("sampler", "two_level"))(rng, exp.space, solver.collar, exp.cfg.delta)
    u = solver.solve(g).u

    def gamma_mu(rho):
        return led.gamma * led.mu_at(rho)

    prof = oscillation_profile(exp.space, u, exp.center, radii, gamma_mu)
    steps = []
    for small, big in zip(radii[:-1], radii[1:]):
        steps.append(oscillation_step(exp.space, u, ball(exp.space, exp.center, big),
                                      ball(exp.space, exp.center, small), gamma_mu(small)))
    factors = {float(s): st.factor for s, st in zip(radii[:-1], steps)}
    rows = []
    verdict = "inconclusive"
    for rad, M, m, gm in zip(prof.radii, prof.M, prof.m, prof.gamma_mu):
        if rad <= R / 4:
            dm = decay_modulus(gamma_mu, rad, R)
            decay, verdict = dm.multiplier, dm.verdict
        else:
            decay = 1.0
        rows.append({"r": float(rad), "M_r": float(M), "m_r": float(m), "omega": float(M - m),
                     "gamma_mu": float(gm), "bound_multiplier": factors.get(float(rad), 1.0),
                     "decay_multiplier": decay})
    return OscillationRun(prof, steps, rows, verdict)


# -- lemma checks ---------------------------------------------------------


@dataclass
class LemmaRun:
    sup_bound: object
    negative_power: object
    log_weak: object
    moser: object

    @property
    def passed(self) -> bool:
        return (self.sup_bound.passed and self.negative_power.passed and self.log_weak.passed
                and self.moser.passed)


def run_lemmas(exp: Experiment) -> LemmaRun:
    led = exp.ledger
    b = exp.ball
    solver = HarmonicSolver(exp.form, b)
    rng = np.random.default_rng(exp.cfg.seed + 1)
    sampler = boundary_sampler("mixed")
    delta = exp.cfg.delta
    u1 = solver.solve(sampler(rng, exp.space, solver.collar, delta)).u
    u2 = solver.solve(sampler(rng, exp.space, solver.collar, delta)).u
    sched = IterationSchedule(0.5, 2.0, led.sigma)
    sup = subsolution_sup_bound(exp.form, b, np.fmax(u1, u2), sched, led)
    neg = all_p_bound(exp.form, b, u1, -2.0, sched, led)
    logw = log_weak_estimate(exp.form, b, u1, led)
    k = log_mean(exp.space, ball(exp.space, exp.center, 0.75 * b.radius), u1)
    s_grid = np.linspace(0.5, 1.0, 6)
    phi = [float(np.max(np.log(u1[ball(exp.space, exp.center, s * b.radius / 2).members] / k)))
           for s in s_grid]
    phi = np.maximum.accumulate(phi)
    mb = moser_abstract_bound(s_grid, phi, led.mu, led.mu_prime, led.d, led.c_abs)
    return LemmaRun(sup, neg, logw, mb)


def moser_rows(led: ConstantLedger) -> list:
    series = gamma_constant(led.d, led.gamma1)
    return [{"d": led.d, "gamma1": led.gamma1, "gamma": series.value, "terms": series.terms,
             "tail_bound": series.tail_bound * series.gamma1, "mu": led.mu, "mu_prime": led.mu_prime,
             "log_bound": led.log_harnack_bound}]


MOSER_HEADER = ["d", "gamma1", "gamma", "terms", "tail_bound", "mu", "mu_prime", "log_bound"]


def write_outputs(out_dir: Path, name: str, header, rows) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    write_csv(path, header, rows)
    return path


def format_report(exp: Experiment, harn: HarnackRun | None, osc: OscillationRun | None,
                  lem: LemmaRun | None) -> str:
    led = exp.ledger
    g = lambda x: format(float(x), ".6g")  # noqa: E731
    lines = ["== constants =="]
    lines.append(f"space: {exp.space.kind}, {exp.space.n_vertices} vertices, R0 = {g(exp.space.r0)}")
    lines.append(f"ball: center {exp.center}, radius {g(exp.cfg.radius)}, "
                 f"{len(exp.ball)} vertices")
    lines.append(f"nu = {g(led.nu)} ({led.notes['nu']}), q = {g(led.q)}, sigma = {g(led.sigma)}, "
                 f"d = {g(led.d)}")
    lines.append(f"tau = {g(led.tau)}{' (boundary-clipped)' if led.tau_clipped else ''}, "
                 f"c_abs = {g(led.c_abs)}, k_dil = {g(led.k_dil)}")
    lines.append("c1 envelope: " + ", ".join(f"{g(r)}: {g(c)}" for r, c in zip(led.radii, led.c1_env)))
    lines.append(f"gamma1 = {g(led.gamma1)}, gamma = {g(led.gamma)}, mu = {g(led.mu)}, "
                 f"mu' = {g(led.mu_prime)}, log bound = {g(led.log_harnack_bound)}")
    if lem is not None:
        lines.append("")
        lines.append("== lemmas ==")
        s = lem.sup_bound
        lines.append(f"sup bound (p=2, subsolution): measured {g(s.measured)} <= bound {g(s.bound)}: "
                     f"{'pass' if s.passed else 'FAIL'}")
        n = lem.negative_power
        lines.append(f"sup of u^-2: measured {g(n.measured)} <= bound {g(n.bound)}: "
                     f"{'pass' if n.passed else 'FAIL'}")
        lw = lem.log_weak
        lines.append(f"log tail: k = {g(lw.k)}, tails {[g(t) for t in lw.tail]} vs envelope "
                     f"{[g(e) for e in lw.envelope]}: {'pass' if lw.passed else 'FAIL'}")
        lines.append(f"log energy {g(lw.log_energy)} vs cutoff bound {g(lw.energy_bound)}: "
                     f"{'pass' if lw.energy_passed else 'FAIL'}")
        mb = lem.moser
        lines.append(f"abstract lemma: phi(1/2) = {g(mb.phi_half)} <= gamma mu^2 mu' = "
                     f"{g(mb.log_bound)}: {'pass' if mb.passed else 'FAIL'}")
    if harn is not None:
        lines.append("")
        lines.append("== theorem ==")
        for dl, rep in zip(harn.deltas, harn.reports):
            lines.append(f"delta {g(dl)}: {len(rep.rows)} samples, {rep.excluded} excluded, max ratio "
                         f"{g(rep.max_ratio)}, log max ratio {g(math.log(rep.max_ratio))} <= "
                         f"log bound {g(rep.log_bound)}: {'pass' if rep.passed else 'FAIL'}")
        if len(harn.deltas) > 1:
            lines.append(f"delta drift of max ratio: {g(harn.drift)}")
    if osc is not None:
        lines.append("")
        lines.append("== corollary ==")
        for row in osc.rows:
            lines.append(f"r = {g(row['r'])}: omega = {g(row['omega'])}, gamma mu = {g(row['gamma_mu'])}, "
                         f"step factor {g(row['bound_multiplier'])}, decay multiplier "
                         f"{g(row['decay_multiplier'])}")
        lines.append(f"oscillation steps: {'pass' if osc.passed else 'FAIL'}; continuity test: {osc.verdict}")
    return "\n".join(lines) + "\n"
