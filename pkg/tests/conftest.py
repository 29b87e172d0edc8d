import numpy as np
import pytest

from jawkit import synth
from jawkit.mesh import TriangleMesh


@pytest.fixture(scope="session")
def phantom():
    return synth.make_phantom()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_cube() -> TriangleMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                  [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
                  [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
                  [1, 2, 6], [1, 6, 5], [0, 4, 7], [0, 7, 3]])
    return TriangleMesh(v, f, "cube")


def flat_plate(size=10.0, n=11, z=0.0, name="plate") -> TriangleMesh:
    xs = np.linspace(-size / 2, size / 2, n)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    v = np.stack([gx.ravel(), gy.ravel(), np.full(n * n, z)], axis=1)
    return TriangleMesh(v, synth.grid_triangles(n, n), name)


@pytest.fixture
def cube():
    return unit_cube()


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(number, title, passed, detail)`` for the end-of-run summary."""
    table = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        table[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(table):
        title, ok, detail = table[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
