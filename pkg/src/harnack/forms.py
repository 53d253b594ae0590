"""Strongly local Dirichlet forms on graphs.

A form is a set of nonnegative edge conductances ``c_e``; for vertex functions
``a(u, v) = sum_e c_e (u(a) - u(b)) (v(a) - v(b))``.  The energy measure splits
each edge term equally between its two endpoints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .space import Space

EPSILON_DEGENERACY = 1e-8


class FormError(ValueError):
    pass


@dataclass(eq=False)
class EnergyForm:
    space: Space
    conductance: np.ndarray

    def __post_init__(self):
        self.conductance = np.asarray(self.conductance, dtype=float)
        if self.conductance.shape != (len(self.space.edges),):
            raise FormError("one conductance per edge required")
        if np.any(~np.isfinite(self.conductance)) or np.any(self.conductance < 0):
            raise FormError("conductances must be finite and nonnegative")

    @property
    def n_vertices(self) -> int:
        return self.space.n_vertices

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        """Matrix L with ``u @ L @ v == energy(u, v)``."""
        n = self.n_vertices
        a, b = self.space.edges.T
        c = self.conductance
        off = sparse.coo_matrix((np.r_[-c, -c], (np.r_[a, b], np.r_[b, a])), shape=(n, n))
        diag = np.bincount(a, c, n) + np.bincount(b, c, n)
        return (off + sparse.diags(diag)).tocsr()

    @property
    def max_conductance(self) -> float:
        return float(self.conductance.max()) if len(self.conductance) else 0.0

    def with_space(self, space: Space) -> "EnergyForm":
        if len(space.edges) != len(self.space.edges) or np.any(space.edges != self.space.edges):
            raise FormError("space has a different edge set")
        return EnergyForm(space, self.conductance.copy())

    def _diffs(self, u, v):
        u = self._check(u)
        v = self._check(v)
        a, b = self.space.edges.T
        return u[a] - u[b], v[a] - v[b]

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_vertices,):
            raise FormError(f"field has shape {u.shape}, expected ({self.n_vertices},)")
        return u


def energy(form: EnergyForm, u, v) -> float:
    du, dv = form._diffs(u, v)
    return float(np.sum(form.conductance * du * dv))


def energy_measure(form: EnergyForm, u, v) -> np.ndarray:
    """Per-vertex energy density; sums to ``energy(form, u, v)``."""
    du, dv = form._diffs(u, v)
    contrib = 0.5 * form.conductance * du * dv
    a, b = form.space.edges.T
    n = form.n_vertices
    return np.bincount(a, contrib, n) + np.bincount(b, contrib, n)


def edge_energy(form: EnergyForm, u, v, vertices) -> float:
    """Energy of the edges with both endpoints in ``vertices`` (Neumann restriction)."""
    inside = np.zeros(form.n_vertices, dtype=bool)
    inside[np.asarray(vertices, dtype=np.int64)] = True
    a, b = form.space.edges.T
    keep = inside[a] & inside[b]
    du, dv = form._diffs(u, v)
    return float(np.sum(form.conductance[keep] * du[keep] * dv[keep]))


@dataclass
class CutoffFn:
    values: np.ndarray
    center: int
    r: float
    s: float
    t: float
    c_cut: float

    @property
    def inner_radius(self) -> float:
        return self.s * self.r

    @property
    def outer_radius(self) -> float:
        return self.t * self.r


def make_cutoff(form: EnergyForm, center: int, r: float, s: float, t: float) -> CutoffFn:
    """Radial cutoff: 1 on B(x, s r), 0 off B(x, t r), linear in d(x, .) between.

    ``c_cut`` is the measured constant in ``mu(eta, eta)(y) <= c_cut m(y) / ((t-s) r)^2``.
    """
    if not s < t:
        raise ValueError(f"cutoff needs s < t, got s={s}, t={t}")
    if not (0.5 <= s and t <= 1):
        raise ValueError("cutoff needs 1/2 <= s < t <= 1")
    if r <= 0:
        raise ValueError("r must be positive")
    d = form.space.distances(center)
    width = (t - s) * r
    eta = np.clip((t * r - d) / width, 0.0, 1.0)
    dens = energy_measure(form, eta, eta)
    c_cut = float(np.max(dens * width**2 / form.space.measure))
    return CutoffFn(eta, int(center), float(r), float(s), float(t), c_cut)


@dataclass
class WeightPair:
    """Lower/upper weights ``w <= v`` with their measured A2 and doubling constants."""

    w: np.ndarray
    v: np.ndarray
    a2_constant: float
    dinfty_constant: float

    @property
    def dinfty_flag(self) -> bool:
        return bool(np.isfinite(self.dinfty_constant))


def weight_pair(space: Space, w, v=None, centers=None, radii=(2.0, 4.0, 8.0)) -> WeightPair:
    """Measure the A2 characteristic of ``w`` and the doubling ratio of ``v``.

    A2: max over sampled balls of ``avg_B(w) * avg_B(1/w)`` (m-averages).
    D_inf: max over sampled balls of ``v(B(x, 2r)) / v(B(x, r))``.
    """
    w = np.broadcast_to(np.asarray(w, dtype=float), (space.n_vertices,)).copy()
    v = w.copy() if v is None else np.broadcast_to(np.asarray(v, dtype=float), (space.n_vertices,)).copy()
    if np.any(w <= 0) or np.any(~np.isfinite(w)):
        raise FormError("lower weight must be positive and finite")
    if np.any(w > v):
        bad = int(np.flatnonzero(w > v)[0])
        raise FormError(f"w > v at vertex {bad}")
    if centers is None:
        centers = np.arange(space.n_vertices)
    radii = np.asarray(radii, dtype=float)
    m = space.measure
    a2 = 1.0
    dinf = 1.0
    limit = 2 * radii.max()
    for _, d in space.distance_rows(centers, limit=limit):
        for r in radii:
            inside = d < r
            mass = inside @ m
            avg_w = (inside @ (m * w)) / mass
            avg_winv = (inside @ (m / w)) / mass
            a2 = max(a2, float(np.max(avg_w * avg_winv)))
            vin = inside @ (m * v)
            vout = (d < 2 * r) @ (m * v)
            dinf = max(dinf, float(np.max(vout / vin)))
    return WeightPair(w, v, a2, dinf)


def power_weight(space: Space, exponent: float, axis: int = 0) -> np.ndarray:
    """Cell average of ``|x_axis|**exponent`` over ``[x - h/2, x + h/2]``.

    Averaging keeps weights such as ``|x|**0.5`` strictly positive on a node at 0.
    """
    if space.positions is None or space.spacing is None:
        raise FormError("power_weight needs a grid space")
    if exponent <= -1:
        raise FormError("exponent must exceed -1 for a locally integrable weight")
    x = space.positions[:, axis]
    h = space.spacing
    p = exponent + 1.0

    def prim(t):
        return np.sign(t) * np.abs(t) ** p / p

    return (prim(x + h / 2) - prim(x - h / 2)) / h


def _per_vertex_matrices(A, n: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape == (2, 2):
        A = np.broadcast_to(A, (n, 2, 2))
    if A.shape != (n, 2, 2):
        raise FormError(f"coefficient field must have shape (2, 2) or ({n}, 2, 2)")
    if not np.allclose(A, np.swapaxes(A, 1, 2)):
        raise FormError("coefficient matrices must be symmetric")
    return A


def build_weighted_elliptic(space: Space, weights: WeightPair, A=None) -> EnergyForm:
    """5-point discretisation of ``div(A grad u)`` on a grid.

    Axis edges take the endpoint-averaged diagonal entry of A; off-diagonal
    entries only enter the ellipticity check ``w |xi|^2 <= <A xi, xi> <= v |xi|^2``.
    """
    if space.shape is None:
        raise FormError("weighted elliptic forms need a grid space")
    n = space.n_vertices
    A = _per_vertex_matrices(np.eye(2) if A is None else A, n)
    eig = np.linalg.eigvalsh(A)
    tol = 1e-12
    low = eig[:, 0] < weights.w * (1 - tol)
    high = eig[:, 1] > weights.v * (1 + tol)
    if low.any() or high.any():
        cell = int(np.flatnonzero(low | high)[0])
        i, j = space.grid_index(cell)
        raise FormError(
            f"ellipticity bound violated at cell {cell} (i={i}, j={j}): "
            f"eigenvalues {eig[cell]} vs w={weights.w[cell]:g}, v={weights.v[cell]:g}"
        )
    a, b = space.edges.T
    axis = space.edge_axis
    diag = A[:, [0, 1], [0, 1]]  # (n, 2)
    cond = 0.5 * (diag[a, axis] + diag[b, axis])
    return EnergyForm(space, cond)


def build_grushin(space: Space, exponent: float, weights: WeightPair | None = None,
                  epsilon: float = EPSILON_DEGENERACY) -> EnergyForm:
    """Form of the fields ``X1 = d/dx1``, ``X2 = |x1|**exponent d/dx2`` on a grid.

    Vertical conductances ``|x1|**(2*exponent)`` are floored at ``epsilon`` so
    the form stays irreducible across ``x1 = 0``.
    """
    if space.shape is None or space.positions is None:
        raise FormError("Grushin forms need a grid space")
    if exponent < 0:
        raise FormError("exponent must be nonnegative")
    a, b = space.edges.T
    w = np.ones(space.n_vertices) if weights is None else weights.w
    scale = 0.5 * (w[a] + w[b])
    x1 = space.positions[a, 0]  # vertical edges share x1 at both ends
    vertical = np.maximum(np.abs(x1) ** (2.0 * exponent), epsilon)
    cond = np.where(space.edge_axis == 1, vertical, 1.0) * scale
    return EnergyForm(space, cond)


def intrinsic_space(form: EnergyForm) -> Space:
    """The form's space re-metrised with edge lengths ``1/sqrt(c_e)``."""
    if np.any(form.conductance <= 0):
        raise FormError("intrinsic metric needs strictly positive conductances")
    return form.space.with_lengths(1.0 / np.sqrt(form.conductance))


def build_form(space: Space, descriptor: dict) -> EnergyForm:
    """Operator from a config table: ``kind`` is ``elliptic`` or ``grushin``."""
    desc = dict(descriptor)
    kind = desc.get("kind", "elliptic")
    w_exp = desc.get("weight_exponent")
    w = power_weight(space, float(w_exp)) if w_exp is not None else np.ones(space.n_vertices)
    scale = float(desc.get("scale", 1.0))
    w = w * scale
    weights = WeightPair(w, w, 1.0, 1.0)
    if kind == "elliptic":
        A = w[:, None, None] * np.eye(2)
        form = build_weighted_elliptic(space, weights, A)
    elif kind == "grushin":
        form = build_grushin(space, float(desc.get("exponent", 1.0)), weights,
                             float(desc.get("epsilon", EPSILON_DEGENERACY)))
    else:
        raise FormError(f"unknown operator kind {kind!r}")
    if desc.get("metric", "graph") == "intrinsic":
        form = form.with_space(intrinsic_space(form))
    return form


def write_conductance_csv(form: EnergyForm, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "conductance"])
        for (a, b), c in zip(form.space.edges, form.conductance):
            w.writerow([int(a), int(b), f"{c:.17g}"])
