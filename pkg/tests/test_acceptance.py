"""Acceptance suite, one test per criterion.

Every criterion prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with its
measurements. Under pytest the lines are repeated in the terminal summary;
the file also runs as a script::

    python3 tests/test_acceptance.py          # all criteria
    python3 tests/test_acceptance.py 5 9      # a subset
"""
from __future__ import annotations

import functools
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from clothuntangle import fileio  # noqa: E402
from clothuntangle.cli import EXIT_INTERSECTING, EXIT_OK, main as cli_main  # noqa: E402
from clothuntangle.collision import (BodyContacts, CorrespondenceSet, detect_intersections,  # noqa: E402
                                     find_body_edges, find_cloth_correspondences)
from clothuntangle.contours import classify_nodes, make_contours, remove_nested  # noqa: E402
from clothuntangle.energy import (FrictionContacts, bending_energy, body_collision_energy,  # noqa: E402
                                  friction_energy, gravity_energy, inertia_energy, repulsion_energy,
                                  repulsion_frame, stretching_energy)
from clothuntangle.icloss import (IcGradientMode, crossing_components, host_planes, ic_gradient,  # noqa: E402
                                  ic_loss_frozen)
from clothuntangle.mesh import build_topology  # noqa: E402
from clothuntangle.scenes import SceneRecipe, generate, grid_sheet, sphere_through_sheet  # noqa: E402
from clothuntangle.solver import (ResolveStatus, SimState, SolverConfig, resolve_static,  # noqa: E402
                                  simulate_sequence, step_frame)

from conftest import (contact_scene, energy_sheet, plus_crossing, random_crossing,  # noqa: E402
                      random_material, random_scene, slot_crossing)
from oracles import (brute_force_body_edges, brute_force_correspondences,  # noqa: E402
                     brute_force_intersections, central_difference, oracle_classification, relative_error)

pytestmark = pytest.mark.acceptance

#: ``{criterion: (passed, detail)}`` filled in as criteria run
RESULTS: dict[int, tuple[bool, str]] = {}

ABLATION_RESOLUTION = 12
ABLATION_FRAMES = 100


def _line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}  {detail}"


def criterion(n: int):
    """Record and print the outcome of a criterion function.

    The wrapped function returns a detail string on success and raises on
    failure; the exception is re-raised after the FAIL line is printed.
    """
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            try:
                detail = fn()
            except Exception as exc:
                msg = str(exc).strip().splitlines()
                RESULTS[n] = (False, f"{type(exc).__name__}: {msg[0] if msg else ''} "
                                     f"[{time.perf_counter() - t0:.1f}s]")
                print(_line(n), flush=True)
                raise
            RESULTS[n] = (True, f"{detail} [{time.perf_counter() - t0:.1f}s]")
            print(_line(n), flush=True)
        run.number = n
        return run
    return wrap


def _fd_error(f, grad, x, h=1e-6):
    return relative_error(grad, central_difference(lambda y: f(y)[0], x, h))


def _windows_ok(traj, width=10):
    """Fraction of sliding windows over which the count does not increase.

    The window starting at iteration ``i`` compares ``traj[i]`` with
    ``traj[min(i + width, end)]``.
    """
    end = len(traj) - 1
    starts = range(max(1, end - width + 1))
    return float(np.mean([traj[min(i + width, end)] <= traj[i] for i in starts]))


@criterion(1)
def gradient_correctness():
    t0 = time.perf_counter()
    worst_energy = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        mesh, x = energy_sheet(rng)
        p = random_material(rng)
        prev = x + rng.normal(0, 0.01, x.shape)
        v = rng.normal(0, 0.3, x.shape)
        dt = rng.uniform(1 / 120, 1 / 24)
        m = mesh.vertex_mass
        errs = [
            _fd_error(lambda y: stretching_energy(mesh, y, p), stretching_energy(mesh, x, p)[1], x),
            _fd_error(lambda y: bending_energy(mesh, y, p), bending_energy(mesh, x, p)[1], x),
            _fd_error(lambda y: inertia_energy(m, y, prev, v, dt), inertia_energy(m, x, prev, v, dt)[1], x),
            _fd_error(lambda y: gravity_energy(m, y, p.gravity), gravity_energy(m, x, p.gravity)[1], x),
        ]
        # contact terms with their correspondence sets and frames held fixed
        xc, n, d = contact_scene(rng)
        faces = np.array([[0, 1, 2]])
        k = len(xc) - 3
        nodes = np.arange(3, 3 + k)
        xi = 1e-3 * rng.uniform(1, 3)
        d_prev = np.where(rng.uniform(size=k) < 0.5, -1.0, 1.0) * 1e-3
        corr = CorrespondenceSet(nodes, np.zeros(k, np.int64), d, d_prev, np.full((k, 3), 1 / 3))
        frame = repulsion_frame(corr, xc, faces)
        contacts = BodyContacts(nodes, np.zeros(k, np.int64), xc[nodes] - d[:, None] * n, np.tile(n, (k, 1)),
                                np.tile(xc[0], (k, 1)))
        fc = FrictionContacts(nodes, np.zeros(k, np.int64), frame[1], frame[0], nodes[:2],
                              rng.normal(0, 1e-3, (2, 3)), np.tile(n, (2, 1)))
        prev_c = xc + rng.normal(0, 1e-3, xc.shape)
        errs += [
            _fd_error(lambda y: repulsion_energy(corr, y, faces, xi, frame),
                      repulsion_energy(corr, xc, faces, xi, frame)[1], xc),
            _fd_error(lambda y: body_collision_energy(y, None, None, p, contacts),
                      body_collision_energy(xc, None, None, p, contacts)[1], xc),
            _fd_error(lambda y: friction_energy(fc, y, prev_c, faces, p),
                      friction_energy(fc, xc, prev_c, faces, p)[1], xc),
        ]
        worst_energy = max(worst_energy, *errs)
    worst_ic = 0.0
    for seed in range(100):
        mesh, x, inter = random_crossing(np.random.default_rng(seed))
        planes = host_planes(inter, x, mesh.faces)
        fd = central_difference(lambda y: ic_loss_frozen(inter, y, planes), x, 1e-7)
        worst_ic = max(worst_ic, relative_error(ic_gradient(inter, x, mesh, IcGradientMode.FULL).gradient, fd))
    elapsed = time.perf_counter() - t0
    assert worst_energy < 1e-6, f"energy gradient relative error {worst_energy:.2e}"
    assert worst_ic < 1e-5, f"contour-loss gradient relative error {worst_ic:.2e}"
    assert elapsed < 60, f"took {elapsed:.1f}s"
    return f"100 configs x 7 energy terms max rel err {worst_energy:.1e}; 100 crossings IC max rel err {worst_ic:.1e}"


@criterion(2)
def geometry_oracle_equivalence():
    t0 = time.perf_counter()
    largest = 0
    for index in range(50):
        rng = np.random.default_rng(1000 + index)
        x, f = random_scene(rng, index, max_faces=2000)
        largest = max(largest, len(f))
        mesh = build_topology(x, f)
        got = detect_intersections(mesh, x).pairs()
        assert got == set(brute_force_intersections(x, f)), f"intersections differ on scene {index}"
        corr = find_cloth_correspondences(mesh, x, x, eps=0.02).pairs()
        assert corr == brute_force_correspondences(x, f, 0.02), f"correspondences differ on scene {index}"
        body = x[rng.choice(len(x), min(len(x), 500), replace=False)] + rng.normal(0, 0.02, (min(len(x), 500), 3))
        edges = {tuple(e) for e in find_body_edges(x, body, eps_body=0.03).tolist()}
        assert edges == brute_force_body_edges(x, body, 0.03), f"body edges differ on scene {index}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120, f"took {elapsed:.1f}s"
    return f"50 scenes up to {largest} faces set-equal for intersections, correspondences and body edges"


def _scene(kind, res):
    s = generate(SceneRecipe(kind, resolution=res))
    return s.garment, s.positions


@criterion(3)
def contour_taxonomy():
    scenes = {"sphere": sphere_through_sheet, "plus": plus_crossing, "slot": slot_crossing,
              "pierced": lambda: _scene("piercedSheet", 14), "nested": lambda: _scene("nestedPierce", 16)}
    kinds = {}
    for name, build in scenes.items():
        mesh, x = build()
        contours = make_contours(detect_intersections(mesh, x), mesh)
        kept = remove_nested(contours)
        cls = classify_nodes(kept, mesh)
        expected, oracle = oracle_classification(x, mesh.faces)
        assert np.array_equal(cls.non_repelled, expected), f"classification differs on {name}"
        assert sorted(c.closed for c in contours) == sorted(c["closed"] for c in oracle), name
        kinds[name] = (contours, kept, cls, mesh)
    contours, _, cls, mesh = kinds["plus"]
    (c,) = contours
    assert not c.closed and set(np.nonzero(cls.non_repelled)[0]) == set(c.touched_nodes)
    contours, _, cls, _ = kinds["sphere"]
    (c,) = contours
    assert c.closed and set(np.nonzero(cls.non_repelled)[0]) == set(c.inside_nodes)
    contours, kept, _, _ = kinds["nested"]
    assert sum(c.closed for c in contours) == 2 and sum(c.closed for c in kept) == 1, "nested contour kept"
    outer = next(c for c in kept if c.closed)
    inner = next(c for c in contours if c.closed and c is not outer)
    assert inner.touched_nodes <= outer.inside_nodes
    return "5 scenes match the flood-fill oracle; open, closed and nested cases behave as specified"


@criterion(4)
def decomposition():
    worst = 0.0
    for seed in range(200):
        mesh, x, inter = random_crossing(np.random.default_rng(500 + seed))
        comp = crossing_components(inter, x, mesh.faces)
        n = comp.normals[:, :, None, :]
        scale = np.linalg.norm(comp.distortional + comp.translational, axis=-1).max()
        perp = np.abs(np.sum(comp.distortional * n, axis=-1)).max() / scale
        par = np.linalg.norm(np.cross(comp.translational, n), axis=-1).max() / scale
        worst = max(worst, perp, par)
    assert worst <= 1e-9, f"worst relative deviation {worst:.2e}"
    return f"200 random crossings, worst relative deviation {worst:.1e}"


@criterion(5)
def untangling():
    s = generate(SceneRecipe("piercedSheet"))
    initial = len(detect_intersections(s.garment, s.positions))
    assert initial >= 200, f"only {initial} initial pairs"
    cfg = fileio.config_from_dict(dict(s.config, ic_mode="TranslationalOnly"))
    t0 = time.perf_counter()
    res = resolve_static(SimState.at_rest(s.positions), s.garment, config=cfg)
    elapsed = time.perf_counter() - t0
    final = len(detect_intersections(s.garment, res.state.positions))
    ratio = _windows_ok(res.trajectory)
    assert res.status is ResolveStatus.RESOLVED and final == 0, f"{res.status.value}, {final} pairs left"
    assert ratio >= 0.9, f"non-increasing windows {ratio:.2f}"
    assert elapsed < 300, f"took {elapsed:.1f}s"
    return f"{initial} -> 0 pairs in {res.iterations} iterations, non-increasing windows {ratio:.2f}"


@criterion(6)
def ablation_ordering():
    s = generate(SceneRecipe("piercedSheet", resolution=ABLATION_RESOLUTION, frames=ABLATION_FRAMES))
    initial = len(detect_intersections(s.garment, s.positions))
    assert initial > 0
    means = {}
    for ab in ("ours", "full-gradient", "no-ic-loss", "only-repulsive"):
        cfg = fileio.config_from_dict(dict(s.config, ablation=ab))
        recs = simulate_sequence(s.garment, s.positions, s.body, s.body_frames, cfg)
        assert len(recs) == ABLATION_FRAMES
        means[ab] = float(np.mean([r.intersecting_pairs for r in recs]))
    vals = list(means.values())
    shown = ", ".join(f"{k} {v:.2f}" for k, v in means.items())
    assert all(a <= b for a, b in zip(vals, vals[1:])), f"ordering violated: {shown}"
    return f"mean pairs over {ABLATION_FRAMES} frames from {initial}: {shown}"


@criterion(7)
def simulation_sanity():
    x, f = grid_sheet(4, 4, 0.3, 0.3, z=2.0)
    mesh = build_topology(x, f)
    cfg = SolverConfig()
    g = np.asarray(cfg.material.gravity)
    v0 = np.tile([0.4, -0.1, 1.5], (len(x), 1))
    state = SimState(x.copy(), x.copy(), v0)
    worst = 0.0
    for k in range(1, 31):
        state = step_frame(state, mesh, config=cfg)
        # closed form of the implicit Euler recurrence under gravity alone
        exact = x + k * cfg.dt * v0 + cfg.dt ** 2 * g * k * (k + 1) / 2
        worst = max(worst, float(np.abs(state.positions - exact).max()))
    assert worst < 1e-9, f"free fall off by {worst:.2e} m"
    s = generate(SceneRecipe("sphereBody", frames=100))
    recs = simulate_sequence(s.garment, s.positions, s.body, s.body_frames, fileio.config_from_dict(s.config))
    counts = [r.intersecting_pairs for r in recs]
    assert len(counts) == 100 and max(counts) == 0, f"drape reached {max(counts)} pairs"
    return f"free fall max deviation {worst:.1e} m over 30 frames; drape 0 pairs over 100 frames"


@criterion(8)
def determinism_and_formats():
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        outs = []
        for k in range(2):
            d = tmp / f"scene{k}"
            assert cli_main(["genscene", "--kind", "piercedSheet", "--resolution", "8", "--frames", "6",
                             "--seed", "4", "--out", str(d)]) == EXIT_OK
            outs.append(d)
        for name in ("garment.obj", "rest.obj", "body.mseq", "config.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), f"genscene {name} differs"
        src = outs[0]
        runs = {
            "analyze": lambda d: ["analyze", "--in", str(src / "garment.obj"), "--csv", str(d / "stats.csv")],
            "resolve": lambda d: ["resolve", "--in", str(src / "garment.obj"), "--config", str(src / "config.json"),
                                  "--out", str(d / "out.obj"), "--trajectory", str(d / "stats.csv")],
            "simulate": lambda d: ["simulate", "--garment", str(src / "garment.obj"), "--rest", str(src / "rest.obj"),
                                   "--body", str(src / "body.mseq"), "--config", str(src / "config.json"),
                                   "--out", str(d)],
        }
        for cmd, argv in runs.items():
            files = []
            for k in range(2):
                d = tmp / f"{cmd}{k}"
                d.mkdir()
                assert cli_main(argv(d)) in (EXIT_OK, EXIT_INTERSECTING), cmd
                files.append((d / "stats.csv").read_bytes())
            assert files[0] == files[1], f"{cmd} stats differ between runs"
        # round trips
        rng = np.random.default_rng(8)
        x = rng.normal(0, 1, (40, 3))
        faces = rng.integers(0, 40, (30, 3))
        faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
        fileio.write_obj(tmp / "m.obj", x, faces)
        xb, fb = fileio.read_obj(tmp / "m.obj")
        # OBJ coordinates carry nine significant digits
        assert np.array_equal(fb, faces) and np.all(np.abs(xb - x) <= 5e-9 * np.abs(x))
        seq = fileio.MotionSequence([[0, 1, 2], [2, 3, 4]],
                                    rng.normal(0, 1, (5, 7, 3)), 24.0)
        fileio.write_motion_sequence(tmp / "m.mseq", seq)
        back = fileio.read_motion_sequence(tmp / "m.mseq")
        assert back.fps == seq.fps and np.array_equal(back.faces, seq.faces)
        assert np.array_equal(back.frames, seq.frames)
        cfg = SolverConfig(lambda2=3.5, ablation="no-ic-loss", pinned=(1, 2))
        fileio.save_config(tmp / "c.json", cfg)
        assert fileio.config_to_dict(fileio.load_config(tmp / "c.json")) == fileio.config_to_dict(cfg)
        recs = fileio.read_stats_csv(tmp / "simulate0" / "stats.csv")
        fileio.write_stats_csv(recs, tmp / "again.csv")
        assert (tmp / "again.csv").read_bytes() == (tmp / "simulate0" / "stats.csv").read_bytes()
    return "genscene, analyze, resolve and simulate repeat bit-identically; OBJ, motion, config and stats round trip"


@criterion(9)
def known_limitation():
    s = generate(SceneRecipe("poppedPocket"))
    initial = len(detect_intersections(s.garment, s.positions))
    res = resolve_static(SimState.at_rest(s.positions), s.garment, config=fileio.config_from_dict(s.config))
    assert initial > 0
    assert res.status is ResolveStatus.UNRESOLVED, f"status {res.status.value}"
    assert np.isfinite(res.state.positions).all()
    return f"poppedPocket {initial} -> {res.trajectory[-1]} pairs, status {res.status.value}"


CRITERIA = [gradient_correctness, geometry_oracle_equivalence, contour_taxonomy, decomposition, untangling,
            ablation_ordering, simulation_sanity, determinism_and_formats, known_limitation]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion{c.number}_{c.__name__}" for c in CRITERIA])
def test_acceptance(check):
    check()


def run_all(numbers=None) -> int:
    failed = 0
    for check in CRITERIA:
        if numbers and check.number not in numbers:
            continue
        try:
            check()
        except Exception:
            failed += 1
            traceback.print_exc(limit=2, file=sys.stderr)
    print("\n".join(_line(n) for n in sorted(RESULTS)))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(run_all({int(a) for a in sys.argv[1:]}))
