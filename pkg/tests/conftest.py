import sys

import numpy as np
import pytest

from clothuntangle import kernels
from clothuntangle.collision import detect_intersections
from clothuntangle.energy import MaterialParams
from clothuntangle.mesh import build_topology
from clothuntangle.scenes import grid_sheet

BACKENDS = ["python"] + (["cython"] if kernels.cython_available() else [])


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, one line per criterion, after the run."""
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance._line(n))


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = kernels.BACKEND
    kernels.use(request.param)
    yield request.param
    kernels.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def triangle_soup(rng, n_tris, size=0.25):
    """Disconnected random triangles inside the unit cube."""
    centers = rng.uniform(0, 1, (n_tris, 1, 3))
    x = (centers + rng.normal(0, size / 2, (n_tris, 3, 3))).reshape(-1, 3)
    faces = np.arange(3 * n_tris).reshape(-1, 3)
    return x, faces


def crumpled_sheets(rng, res, amp=0.08):
    """Two noisy sheets crossing each other at a random angle."""
    xa, fa = grid_sheet(res, res, 1.0, 1.0)
    xb, fb = grid_sheet(res, res, 1.0, 1.0)
    xa[:, 2] += rng.normal(0, amp, len(xa))
    xb[:, 2] += rng.normal(0, amp, len(xb))
    ang = rng.uniform(0.2, 1.2)
    rot = np.array([[1, 0, 0], [0, np.cos(ang), -np.sin(ang)], [0, np.sin(ang), np.cos(ang)]])
    xb = xb @ rot.T + rng.uniform(-0.1, 0.1, 3)
    x = np.concatenate([xa, xb])
    faces = np.concatenate([fa, fb + len(xa)])
    return x, faces


def random_scene(rng, index, max_faces=2000):
    """Alternate between triangle soups and crumpled sheet pairs of growing size."""
    frac = (index % 10 + 1) / 10
    if index % 2 == 0:
        n = max(8, int(frac * max_faces))
        return triangle_soup(rng, n, size=rng.uniform(0.05, 0.2))
    res = max(3, int(np.sqrt(frac * max_faces / 4)))
    return crumpled_sheets(rng, res)


def small_mesh(rng, res=3, noise=0.05):
    x, f = grid_sheet(res, res, 1.0, 1.0)
    x = x + rng.normal(0, noise, x.shape)
    return build_topology(x, f)


def plus_crossing(res=8):
    """A vertical sheet slicing through a horizontal one from edge to edge."""
    xa, fa = grid_sheet(res, res, 1.0, 1.0)
    xb, fb = grid_sheet(res, res, 1.4, 0.6)
    # offsets keep every edge clear of the other sheet's edges (generic position)
    xb = np.column_stack([xb[:, 0] + 0.0371, np.full(len(xb), 0.0123), xb[:, 1] + 0.017])
    x = np.concatenate([xa, xb])
    return build_topology(x, np.concatenate([fa, fb + len(xa)])), x


def slot_crossing(res=8):
    """Like ``plus_crossing`` but the vertical sheet starts halfway across, so the
    contour runs from one sheet's boundary to the other's and separates neither."""
    mesh, x = plus_crossing(res)
    x = x.copy()
    n = (res + 1) ** 2
    x[n:, 0] = x[n:, 0] / 1.4 + 0.5371
    return build_topology(x, mesh.faces), x


def energy_sheet(rng, res=3):
    x, f = grid_sheet(res, res, 1.0, 1.0)
    rest = x + rng.normal(0, 0.05, x.shape)
    mesh = build_topology(rest, f)
    return mesh, rest + rng.normal(0, 0.08, x.shape)


def random_material(rng):
    return MaterialParams(stretch_stiffness=rng.uniform(1, 1e3), bend_stiffness=rng.uniform(1e-6, 1e-2),
                          body_collision_stiffness=rng.uniform(1e5, 1e7), body_margin=rng.uniform(2e-3, 8e-3),
                          friction_coeff=rng.uniform(0.1, 1.0), friction_stiffness=rng.uniform(0.5, 5.0))


def contact_scene(rng, n_nodes=6):
    """One face plus nodes hovering over its interior within a few mm."""
    tri = rng.normal(0, 1, (3, 3))
    a, b, c = tri
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n)
    w = rng.dirichlet([4, 4, 4], n_nodes)
    d = rng.uniform(-2e-3, 2.5e-3, n_nodes)
    nodes = w @ tri + d[:, None] * n
    x = np.concatenate([tri, nodes])
    return x, n, d


PAIR_FACES = np.array([[0, 1, 2], [3, 4, 5]])


def random_crossing(rng):
    """Two random triangles that intersect in general position."""
    while True:
        x = rng.normal(0, 1, (6, 3))
        x[3:] += rng.normal(0, 0.3, 3)
        mesh = build_topology(x, PAIR_FACES)
        inter = detect_intersections(mesh, x)
        if len(inter):
            return mesh, x, inter
