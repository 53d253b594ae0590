"""Finite metric measure spaces (X, d, m) built on weighted graphs.

Distances are shortest-path lengths over the edge lengths; balls are open,
``B(x, r) = {y : d(x, y) < r}``.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

_DIST_CACHE_SIZE = 2048
_BATCH = 256


class SpaceError(ValueError):
    pass


@dataclass(eq=False)
class Space:
    """Connected weighted graph with a positive vertex measure.

    ``edge_axis`` is 0 for horizontal and 1 for vertical grid edges and -1
    when the space is not a grid.  ``positions`` holds one coordinate tuple per
    vertex (grids only); ``spacing`` is the coordinate step between neighbours.
    """

    n_vertices: int
    edges: np.ndarray
    lengths: np.ndarray
    measure: np.ndarray
    positions: np.ndarray | None = None
    edge_axis: np.ndarray | None = None
    spacing: float | None = None
    shape: tuple[int, int] | None = None
    periodic: bool = False
    kind: str = "edges"
    _diameter: float | None = None
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.measure = np.asarray(self.measure, dtype=float)
        n = self.n_vertices
        if self.measure.shape != (n,):
            raise SpaceError(f"measure has shape {self.measure.shape}, expected ({n},)")
        if not np.all(np.isfinite(self.measure)) or np.any(self.measure <= 0):
            raise SpaceError("vertex measure must be positive")
        if self.lengths.shape != (len(self.edges),):
            raise SpaceError("one length per edge required")
        if np.any(~np.isfinite(self.lengths)) or np.any(self.lengths <= 0):
            raise SpaceError("edge lengths must be positive")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= n):
            raise SpaceError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise SpaceError("self-loops are not allowed")
        keys = np.sort(self.edges, axis=1)
        if len(np.unique(keys, axis=0)) != len(keys):
            raise SpaceError("duplicate edges")
        if self.edge_axis is None:
            self.edge_axis = np.full(len(self.edges), -1, dtype=np.int64)
        a, b = self.edges[:, 0], self.edges[:, 1]
        w = sparse.coo_matrix(
            (np.r_[self.lengths, self.lengths], (np.r_[a, b], np.r_[b, a])), shape=(n, n)
        )
        self.adjacency = w.tocsr()
        n_comp, _ = csgraph.connected_components(self.adjacency, directed=False)
        if n_comp != 1:
            raise SpaceError("space not connected")

    # -- metric -----------------------------------------------------------

    def distances(self, center: int) -> np.ndarray:
        """Distances from ``center`` to every vertex (cached per center)."""
        center = int(center)
        cached = self._cache.get(center)
        if cached is not None:
            self._cache.move_to_end(center)
            return cached
        d = csgraph.dijkstra(self.adjacency, directed=False, indices=center)
        d.setflags(write=False)
        self._cache[center] = d
        if len(self._cache) > _DIST_CACHE_SIZE:
            self._cache.popitem(last=False)
        return d

    def distance_rows(self, centers: Sequence[int], limit: float = np.inf) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(chunk, D)`` blocks of distance rows, truncated at ``limit``."""
        centers = np.asarray(centers, dtype=np.int64)
        for start in range(0, len(centers), _BATCH):
            chunk = centers[start:start + _BATCH]
            d = csgraph.dijkstra(self.adjacency, directed=False, indices=chunk, limit=limit)
            yield chunk, np.atleast_2d(d)

    @property
    def diameter(self) -> float:
        if self._diameter is None:
            best = 0.0
            for _, d in self.distance_rows(np.arange(self.n_vertices)):
                best = max(best, float(d.max()))
            self._diameter = best
        return self._diameter

    @property
    def r0(self) -> float:
        """Largest usable radius: half the diameter."""
        return self.diameter / 2.0

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)

    def neighbors(self, v: int) -> np.ndarray:
        row = self.adjacency[int(v)]
        return row.indices.copy()

    def with_lengths(self, lengths: np.ndarray) -> "Space":
        """Same vertices, edges and measure under new edge lengths."""
        return Space(
            self.n_vertices, self.edges.copy(), lengths, self.measure.copy(),
            positions=self.positions, edge_axis=self.edge_axis.copy(), spacing=self.spacing,
            shape=self.shape, periodic=self.periodic, kind=self.kind,
        )

    def grid_index(self, v: int) -> tuple[int, int]:
        if self.shape is None:
            raise SpaceError("not a grid space")
        n1 = self.shape[0]
        return int(v) % n1, int(v) // n1


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: np.ndarray
    measure: float

    def __len__(self):
        return len(self.members)

    def mask(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        out[self.members] = True
        return out

    def __contains__(self, v) -> bool:
        return bool(np.isin(v, self.members))


def ball(space: Space, center: int, radius: float) -> Ball:
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    d = space.distances(center)
    members = np.flatnonzero(d < radius)
    return Ball(int(center), float(radius), members, float(space.measure[members].sum()))


def _grid_positions(n: int, lower: float, upper: float) -> tuple[np.ndarray, float]:
    h = (upper - lower) / n
    return lower + h * np.arange(n), h


def grid2d(n: int, periodic: bool = False, measure: float | np.ndarray = 1.0,
           length: float = 1.0, lower: float = -1.0, upper: float = 1.0) -> Space:
    """n x n lattice; vertex ``i + n*j`` sits at ``(lower + i*h, lower + j*h)``
    with ``h = (upper - lower)/n``."""
    if n < 2 or (periodic and n < 3):
        raise SpaceError(f"grid2d needs n >= {3 if periodic else 2}, got {n}")
    idx = np.arange(n * n).reshape(n, n)  # idx[j, i] = i + n*j
    right = np.roll(idx, -1, axis=1)
    up = np.roll(idx, -1, axis=0)
    if periodic:
        h_edges = np.c_[idx.ravel(), right.ravel()]
        v_edges = np.c_[idx.ravel(), up.ravel()]
    else:
        h_edges = np.c_[idx[:, :-1].ravel(), right[:, :-1].ravel()]
        v_edges = np.c_[idx[:-1, :].ravel(), up[:-1, :].ravel()]
    edges = np.r_[h_edges, v_edges]
    axis = np.r_[np.zeros(len(h_edges), np.int64), np.ones(len(v_edges), np.int64)]
    coords, h = _grid_positions(n, lower, upper)
    pos = np.c_[np.tile(coords, n), np.repeat(coords, n)]
    m = np.broadcast_to(np.asarray(measure, dtype=float), (n * n,)).copy()
    diameter = float(2 * (n // 2) if periodic else 2 * (n - 1)) * length
    return Space(n * n, edges, np.full(len(edges), float(length)), m, positions=pos,
                 edge_axis=axis, spacing=h, shape=(n, n), periodic=periodic,
                 kind="grid2d", _diameter=diameter)


def path(n: int, measure: float | np.ndarray = 1.0, length: float = 1.0) -> Space:
    if n < 1:
        raise SpaceError("path needs at least one vertex")
    edges = np.c_[np.arange(n - 1), np.arange(1, n)]
    m = np.broadcast_to(np.asarray(measure, dtype=float), (n,)).copy()
    lengths = np.broadcast_to(np.asarray(length, dtype=float), (n - 1,)).copy()
    pos = np.arange(n, dtype=float)[:, None]
    return Space(n, edges, lengths, m, positions=pos, kind="path", _diameter=float(lengths.sum()))


def from_edges(n: int, edges: Iterable[Sequence[float]], measure: float | Sequence[float] = 1.0) -> Space:
    """Space from ``(src, dst[, length])`` rows."""
    rows = [tuple(e) for e in edges]
    pairs = np.array([(int(r[0]), int(r[1])) for r in rows], dtype=np.int64).reshape(-1, 2)
    lengths = np.array([float(r[2]) if len(r) > 2 else 1.0 for r in rows])
    m = np.broadcast_to(np.asarray(measure, dtype=float), (n,)).copy()
    return Space(n, pairs, lengths, m, kind="edges")


def build_space(descriptor: Mapping) -> Space:
    """Build a space from a config table, e.g. ``{"kind": "grid2d", "n": 64, "periodic": true}``."""
    desc = dict(descriptor)
    kind = desc.pop("kind", None)
    measure = desc.pop("measure", 1.0)
    if kind == "grid2d":
        return grid2d(int(desc.pop("n")), periodic=bool(desc.pop("periodic", False)),
                      measure=measure, length=float(desc.pop("length", 1.0)),
                      lower=float(desc.pop("lower", -1.0)), upper=float(desc.pop("upper", 1.0)))
    if kind == "path":
        return path(int(desc.pop("n")), measure=measure, length=desc.pop("length", 1.0))
    if kind == "edges":
        return from_edges(int(desc.pop("n")), desc.pop("edges"), measure=measure)
    raise SpaceError(f"unknown space kind {kind!r}")


@dataclass
class DoublingEstimate:
    """Doubling data: ``c0[i] * (r/R)**nu_hat * m(B(centers[i], R)) <= m(B(centers[i], r))``
    for every pair of radii ``r <= R`` in ``radii``."""

    nu_hat: float
    centers: np.ndarray
    c0: np.ndarray
    radii: np.ndarray
    ball_measures: np.ndarray

    @property
    def r_min(self) -> float:
        return float(self.radii[0])

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    def c0_field(self, n_vertices: int) -> np.ndarray:
        """Per-vertex c0 with NaN at vertices that were not sampled."""
        out = np.full(n_vertices, np.nan)
        out[self.centers] = self.c0
        return out

    def violations(self) -> int:
        """Exact (zero tolerance) recount of failed doubling inequalities."""
        return _doubling_violations(self.c0, self.nu_hat, self.radii, self.ball_measures)


def _radius_pairs(radii: np.ndarray) -> list[tuple[int, int]]:
    return [(i, j) for i in range(len(radii)) for j in range(i, len(radii))]


def _doubling_lhs(c0: np.ndarray, nu: float, r: float, big_r: float, m_big: np.ndarray) -> np.ndarray:
    return c0 * (r / big_r) ** nu * m_big


def _doubling_violations(c0, nu, radii, meas) -> int:
    bad = 0
    for i, j in _radius_pairs(radii):
        lhs = _doubling_lhs(c0, nu, radii[i], radii[j], meas[:, j])
        bad += int(np.count_nonzero(~(lhs <= meas[:, i])))
    return bad


def ball_measures(space: Space, centers: Sequence[int], radii: Sequence[float]) -> np.ndarray:
    """``out[i, k] = m(B(centers[i], radii[k]))``."""
    radii = np.asarray(radii, dtype=float)
    out = np.empty((len(centers), len(radii)))
    pos = 0
    for chunk, d in space.distance_rows(centers, limit=float(radii.max())):
        for k, r in enumerate(radii):
            out[pos:pos + len(chunk), k] = (d < r) @ space.measure
        pos += len(chunk)
    return out


def _check_radii(space: Space, radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 2:
        raise ValueError("need at least two radii")
    if np.any(np.diff(radii) < 0):
        raise ValueError("radii must be sorted ascending")
    if radii[0] <= 0 or radii[-1] > space.r0:
        raise ValueError(f"radii must lie in (0, R0={space.r0:g}]")
    return radii


def doubling_c0(meas: np.ndarray, radii: np.ndarray, nu: float) -> np.ndarray:
    """Largest c0 per row satisfying the doubling inequality exactly as evaluated."""
    c0 = np.ones(meas.shape[0])
    for i, j in _radius_pairs(radii):
        if radii[i] < radii[j]:
            c0 = np.minimum(c0, meas[:, i] / (meas[:, j] * (radii[i] / radii[j]) ** nu))
    # float rounding can leave c0 one ulp too large for the stored check
    for _ in range(64):
        bad = np.zeros(len(c0), dtype=bool)
        for i, j in _radius_pairs(radii):
            bad |= ~(_doubling_lhs(c0, nu, radii[i], radii[j], meas[:, j]) <= meas[:, i])
        if not bad.any():
            break
        c0[bad] = np.nextafter(c0[bad], 0.0)
    return c0


def estimate_doubling(space: Space, sample_centers: Sequence[int], radii: Sequence[float],
                      nu: float | None = None) -> DoublingEstimate:
    """Estimate the homogeneous dimension and per-center doubling constants.

    ``nu_hat`` is the largest growth exponent ``log(m(B_R)/m(B_r)) / log(R/r)``
    seen over the sample (an upper envelope).  Passing ``nu`` fixes the exponent
    instead and only ``c0`` is measured.
    """
    radii = _check_radii(space, radii)
    centers = np.asarray(sample_centers, dtype=np.int64)
    meas = ball_measures(space, centers, radii)
    if nu is None:
        nu = 0.0
        for i, j in _radius_pairs(radii):
            if radii[i] < radii[j]:
                rates = np.log(meas[:, j] / meas[:, i]) / math.log(radii[j] / radii[i])
                nu = max(nu, float(rates.max()))
    c0 = doubling_c0(meas, radii, float(nu))
    return DoublingEstimate(float(nu), centers, c0, radii, meas)


def write_space_csv(space: Space, edges_path, vertices_path) -> None:
    with open(edges_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "length"])
        for (a, b), ell in zip(space.edges, space.lengths):
            w.writerow([int(a), int(b), f"{ell:.17g}"])
    with open(vertices_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "measure"])
        for v, mv in enumerate(space.measure):
            w.writerow([v, f"{mv:.17g}"])
