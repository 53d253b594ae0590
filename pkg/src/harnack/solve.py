"""Harmonic functions, sub- and supersolutions of a(u, v) = 0 on balls.

A ball's Dirichlet collar is the set of vertices outside the ball adjacent to
it; boundary data live there.  Fields are full-length vertex arrays with NaN
off ``ball + collar``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from .forms import EnergyForm
from .space import Ball, Space

DENSE_UNKNOWNS = 400
CG_RTOL = 1e-12
RESIDUAL_RTOL = 1e-10


class SolveError(RuntimeError):
    pass


def collar(space: Space, b: Ball) -> np.ndarray:
    inside = b.mask(space.n_vertices)
    a, c = space.edges.T
    touching = np.r_[c[inside[a] & ~inside[c]], a[inside[c] & ~inside[a]]]
    return np.unique(touching)


@dataclass
class SolutionReport:
    u: np.ndarray
    kind: str
    residual: float
    delta_floor: float
    interior: np.ndarray
    collar: np.ndarray
    method: str = ""

    @property
    def domain(self) -> np.ndarray:
        return np.r_[self.interior, self.collar]


class HarmonicSolver:
    """Reusable Dirichlet solver for one (form, ball) pair."""

    def __init__(self, form: EnergyForm, b: Ball):
        self.form = form
        self.ball = b
        self.interior = b.members
        self.collar = collar(form.space, b)
        if len(self.collar) == 0:
            raise SolveError("ball has an empty boundary collar")
        L = form.laplacian
        rows = L[self.interior]
        self.L_ii = rows[:, self.interior].tocsr()
        self.L_ic = rows[:, self.collar].tocsr()
        self._check_connected()
        n_i = len(self.interior)
        if n_i < DENSE_UNKNOWNS:
            try:
                self._chol = scipy.linalg.cho_factor(self.L_ii.toarray())
            except np.linalg.LinAlgError as exc:
                raise SolveError("singular system") from exc
            self.method = "dense"
        else:
            self._chol = None
            self._jacobi = sparse.diags(1.0 / self.L_ii.diagonal())
            self._lu = None
            self.method = "cg"

    def _check_connected(self):
        dom = np.r_[self.interior, self.collar]
        sub = self.form.laplacian[dom][:, dom].tocoo()
        keep = (sub.row != sub.col) & (sub.data != 0)
        graph = sparse.coo_matrix((np.ones(keep.sum()), (sub.row[keep], sub.col[keep])),
                                  shape=(len(dom), len(dom)))
        _, labels = csgraph.connected_components(graph, directed=False)
        grounded = np.unique(labels[len(self.interior):])
        if not np.all(np.isin(labels[:len(self.interior)], grounded)):
            raise SolveError("singular system: interior component without boundary contact")

    def _direct(self, rhs):
        if self._lu is None:
            self._lu = splinalg.splu(self.L_ii.tocsc())
        return self._lu.solve(rhs)

    def solve(self, g) -> SolutionReport:
        g = np.asarray(g, dtype=float)
        if g.shape != (len(self.collar),):
            raise ValueError("boundary data must have one value per collar vertex")
        if not np.all(np.isfinite(g)):
            raise ValueError("boundary data must be finite")
        rhs = -(self.L_ic @ g)
        method = self.method
        if self._chol is not None:
            x = scipy.linalg.cho_solve(self._chol, rhs)
        else:
            x, info = splinalg.cg(self.L_ii, rhs, rtol=CG_RTOL, atol=0.0, M=self._jacobi,
                                  maxiter=20 * len(rhs))
            if info != 0:
                x, method = self._direct(rhs), "splu"
        osc = float(g.max() - g.min())
        scale = self.form.max_conductance * osc
        res = float(np.max(np.abs(self.L_ii @ x - rhs))) if len(x) else 0.0
        if res > RESIDUAL_RTOL * scale and method == "cg":
            x, method = self._direct(rhs), "splu"
            res = float(np.max(np.abs(self.L_ii @ x - rhs)))
        u = np.full(self.form.n_vertices, np.nan)
        u[self.interior] = x
        u[self.collar] = g
        return SolutionReport(u, "harmonic", res, float(g.min()), self.interior, self.collar, method)


def solve_harmonic(form: EnergyForm, b: Ball, boundary) -> SolutionReport:
    """Minimise a(u, u) on the ball with ``u = boundary`` on the collar.

    ``boundary`` is either a full vertex array or one value per collar vertex.
    """
    solver = HarmonicSolver(form, b)
    boundary = np.asarray(boundary, dtype=float)
    g = boundary[solver.collar] if boundary.shape == (form.n_vertices,) else boundary
    return solver.solve(g)


def interior_residuals(form: EnergyForm, b: Ball, u) -> np.ndarray:
    """``a(u, e_x)`` for every vertex x of the ball."""
    u = np.asarray(u, dtype=float)
    dom = np.r_[b.members, collar(form.space, b)]
    if not np.all(np.isfinite(u[dom])):
        raise ValueError("u must be finite on the ball and its collar")
    return form.laplacian[b.members][:, dom] @ u[dom]


def classify(form: EnergyForm, b: Ball, u, rtol: float = 1e-9) -> SolutionReport:
    """Sign test of ``a(u, e_x)`` over the ball: harmonic, subsolution
    (all <= 0), supersolution (all >= 0) or none."""
    u = np.asarray(u, dtype=float)
    res = interior_residuals(form, b, u)
    cl = collar(form.space, b)
    dom_vals = u[np.r_[b.members, cl]]
    tol = rtol * form.max_conductance * float(dom_vals.max() - dom_vals.min())
    if np.max(np.abs(res), initial=0.0) <= tol:
        kind, worst = "harmonic", float(np.max(np.abs(res), initial=0.0))
    elif np.max(res) <= tol:
        kind, worst = "subsolution", float(max(np.max(res), 0.0))
    elif np.min(res) >= -tol:
        kind, worst = "supersolution", float(max(-np.min(res), 0.0))
    else:
        kind, worst = "none", float(np.max(np.abs(res)))
    return SolutionReport(u, kind, worst, float(np.nanmin(dom_vals)), b.members, cl)


def lift_by_delta(u, delta: float) -> np.ndarray:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return np.asarray(u, dtype=float) + delta


# -- boundary samplers ----------------------------------------------------

Sampler = Callable[[np.random.Generator, Space, np.ndarray, float], np.ndarray]


def _uniform(rng, space, cl, delta):
    return rng.uniform(delta, 1.0, len(cl))


def _bump(rng, space, cl, delta):
    y0 = cl[rng.integers(len(cl))]
    d = space.distances(y0)[cl]
    width = rng.uniform(0.2, 0.6) * max(float(d.max()), 1e-12)
    return delta + (1.0 - delta) * np.exp(-((d / width) ** 2))


def _two_level(rng, space, cl, delta):
    y0 = cl[rng.integers(len(cl))]
    d = space.distances(y0)[cl]
    return np.where(d <= np.median(d), 1.0, delta)


def _constant(value):
    def sample(rng, space, cl, delta):
        return np.full(len(cl), max(float(value), delta))

    return sample


def boundary_sampler(kind: str, **params) -> Sampler:
    """Samplers map ``(rng, space, collar, delta)`` to values in ``[delta, 1]``."""
    if kind == "uniform":
        return _uniform
    if kind == "bump":
        return _bump
    if kind == "two_level":
        return _two_level
    if kind == "constant":
        return _constant(params.get("value", 1.0))
    if kind == "mixed":
        options = (_uniform, _bump, _two_level)

        def mixed(rng, space, cl, delta):
            return options[rng.integers(len(options))](rng, space, cl, delta)

        return mixed
    raise ValueError(f"unknown sampler {kind!r}")


def write_solution_csv(u, path) -> None:
    """Finite entries of u as ``vertex,value`` rows."""
    u = np.asarray(u, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "value"])
        for v in np.flatnonzero(np.isfinite(u)):
            w.writerow([int(v), f"{u[v]:.17g}"])
