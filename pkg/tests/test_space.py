import csv
import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harnack.space import (
    SpaceError, ball, build_space, estimate_doubling, from_edges, grid2d, path, write_space_csv,
)


def bfs_ball_size(n, periodic, center, radius):
    """Plain BFS on the lattice, independent of the library's Dijkstra."""
    ci, cj = center % n, center // n
    seen = {(ci, cj): 0}
    queue = deque([(ci, cj)])
    while queue:
        i, j = queue.popleft()
        d = seen[(i, j)]
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if periodic:
                a, b = a % n, b % n
            elif not (0 <= a < n and 0 <= b < n):
                continue
            if (a, b) not in seen:
                seen[(a, b)] = d + 1
                queue.append((a, b))
    return sum(1 for d in seen.values() if d < radius)


def floyd(space):
    n = space.n_vertices
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for (a, b), ell in zip(space.edges, space.lengths):
        d[a, b] = d[b, a] = min(d[a, b], ell)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def test_path_distance():
    sp = path(3)
    assert sp.distances(0)[2] == 2.0


def test_torus_degrees():
    sp = grid2d(4, periodic=True)
    assert sp.n_vertices == 16
    assert np.all(sp.degree() == 4)


def test_total_measure():
    assert grid2d(64, periodic=True).total_measure == 4096


def test_ball_on_path():
    b = ball(path(5), 2, 1.5)
    assert sorted(b.members.tolist()) == [1, 2, 3]
    assert b.measure == 3.0


def test_small_radius_ball_is_center():
    sp = grid2d(6)
    b = ball(sp, 7, 0.5)
    assert b.members.tolist() == [7]
    assert 7 in b


def test_ball_counts_match_bfs():
    sp = grid2d(64, periodic=True)
    # open ball: distances 0, 1, 2 only; the distance-3 shell of 12 joins past r = 3
    assert len(ball(sp, 1000, 3)) == 1 + 4 + 8
    assert len(ball(sp, 1000, 3.5)) == 1 + 4 + 8 + 12
    for center, r in [(0, 4), (2080, 8), (77, 16), (4095, 5)]:
        assert len(ball(sp, center, r)) == bfs_ball_size(64, True, center, r)


def test_ball_counts_open_grid_corner():
    sp = grid2d(10)
    for r in (1, 2.5, 4, 7):
        assert len(ball(sp, 0, r)) == bfs_ball_size(10, False, 0, r)


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        ball(path(3), 0, 0.0)


def test_metric_axioms_exhaustive():
    rng = np.random.default_rng(3)
    sp = grid2d(5).with_lengths(rng.uniform(0.5, 2.0, len(grid2d(5).edges)))
    d = np.array([sp.distances(v) for v in range(sp.n_vertices)])
    np.testing.assert_allclose(d, floyd(sp), rtol=1e-12)
    np.testing.assert_allclose(d, d.T, rtol=1e-12)
    off = ~np.eye(sp.n_vertices, dtype=bool)
    assert np.all(d[off] > 0)
    for x, y, z in itertools.product(range(sp.n_vertices), repeat=3):
        assert d[x, z] <= d[x, y] + d[y, z] + 1e-12


def test_disconnected_rejected():
    with pytest.raises(SpaceError, match="space not connected"):
        from_edges(4, [(0, 1), (2, 3)])


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_nonpositive_measure_rejected(bad):
    with pytest.raises(SpaceError):
        path(3, measure=np.array([1.0, bad, 1.0]))


def test_nonpositive_length_rejected():
    with pytest.raises(SpaceError):
        from_edges(2, [(0, 1, 0.0)])


def test_build_space_descriptors():
    sp = build_space({"kind": "grid2d", "n": 8, "periodic": True})
    assert sp.n_vertices == 64 and sp.periodic
    assert build_space({"kind": "path", "n": 4}).diameter == 3
    e = build_space({"kind": "edges", "n": 3, "edges": [[0, 1, 2.0], [1, 2, 0.5]]})
    assert e.distances(0)[2] == 2.5
    with pytest.raises(SpaceError):
        build_space({"kind": "sphere"})


def test_r0_is_half_diameter():
    assert grid2d(64, periodic=True).r0 == 32
    assert grid2d(10).r0 == 9
    sp = from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert sp.r0 == 1.5


def test_grid_positions():
    sp = grid2d(64)
    assert sp.positions[32, 0] == 0.0
    assert sp.positions[48, 0] == 0.5
    assert sp.grid_index(32 + 64 * 5) == (32, 5)


def test_doubling_grid_range_and_certificate():
    sp = grid2d(64, periodic=True)
    est = estimate_doubling(sp, np.arange(sp.n_vertices), [4, 8, 16])
    sizes = [bfs_ball_size(64, True, 0, r) for r in (4, 8, 16)]
    expected = max(math.log(sizes[j] / sizes[i]) / math.log([4, 8, 16][j] / [4, 8, 16][i])
                   for i in range(3) for j in range(i + 1, 3))
    assert est.nu_hat == pytest.approx(expected, rel=1e-12)
    assert 1.9 <= est.nu_hat <= 2.3
    assert est.violations() == 0
    assert np.all((est.c0 > 0) & (est.c0 <= 1))


def test_doubling_path():
    sp = path(128)
    est = estimate_doubling(sp, np.arange(128), [4, 8, 16])
    assert est.nu_hat == pytest.approx(math.log(15 / 7) / math.log(2), rel=1e-12)
    assert 0.9 <= est.nu_hat <= 1.1
    assert est.violations() == 0


def test_doubling_equal_radii_gives_unit_c0():
    sp = grid2d(16, periodic=True)
    est = estimate_doubling(sp, np.arange(sp.n_vertices), [3, 3])
    assert np.all(est.c0 == 1.0)


def test_doubling_fixed_nu_certificate():
    sp = grid2d(32, periodic=True)
    est = estimate_doubling(sp, np.arange(sp.n_vertices), [2, 4, 8, 16], nu=2.0)
    assert est.nu_hat == 2.0
    assert est.violations() == 0
    assert np.all(est.c0 < 1)


@pytest.mark.parametrize("radii", [[4], [0, 4], [4, 40], [8, 4]])
def test_doubling_rejects_bad_radii(radii):
    with pytest.raises(ValueError):
        estimate_doubling(grid2d(32, periodic=True), [0], radii)


def test_distance_rows_limit_and_cache():
    sp = grid2d(16, periodic=True)
    rows = list(sp.distance_rows([0, 5], limit=3))
    assert len(rows) == 1
    centers, d = rows[0]
    assert d.shape == (2, 256)
    np.testing.assert_array_equal(d[0][d[0] < 3], sp.distances(0)[sp.distances(0) < 3])


def test_write_space_csv(tmp_path):
    sp = path(3, length=0.25)
    write_space_csv(sp, tmp_path / "e.csv", tmp_path / "v.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["src", "dst", "length"]
    assert rows[1] == ["0", "1", "0.25"]
    assert list(csv.reader(open(tmp_path / "v.csv")))[0] == ["vertex", "measure"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 63), st.floats(0.5, 6), st.floats(0.5, 6))
def test_ball_monotone(center, r1, r2):
    sp = grid2d(8, periodic=True)
    lo, hi = sorted((r1, r2))
    small, big = ball(sp, center, lo), ball(sp, center, hi)
    assert set(small.members) <= set(big.members)
    assert small.measure <= big.measure
