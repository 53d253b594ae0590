import numpy as np
import pytest

_ACCEPTANCE = {}


def cone_bumps(space, b, rng, count):
    """Radial bumps (cones and smooth profiles) supported inside the ball."""
    d_center = space.distances(b.center)
    out = []
    for _ in range(count):
        y = int(rng.choice(b.members))
        room = b.radius - d_center[y]
        if room <= 1:
            y, room = b.center, b.radius
        rho = rng.uniform(1.0, room)
        t = space.distances(y) / rho
        if rng.random() < 0.5:
            u = np.clip(1 - t, 0, None)
        else:
            u = np.where(t < 1, np.exp(1 - 1 / np.clip(1 - t**2, 1e-300, None)), 0.0)
        u = rng.uniform(0.1, 10) * u
        u[~b.mask(space.n_vertices)] = 0.0
        out.append(u)
    return out


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; a summary line per criterion is printed at the end."""

    def record(criterion, passed, detail):
        _ACCEPTANCE.setdefault(int(criterion), []).append((bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
