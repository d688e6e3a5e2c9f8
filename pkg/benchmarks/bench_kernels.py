"""Compare the compiled kernels with the numpy fallback.

Times intersection detection and cloth correspondence search on pairs of
crumpled sheets of growing resolution, once per backend, and prints the
speedup. Both backends must report the same number of intersecting pairs.

    python3 benchmarks/bench_kernels.py --resolutions 16 32 48 --repeat 3
"""
import argparse
import time

import numpy as np

from clothuntangle import kernels
from clothuntangle.collision import detect_intersections, find_cloth_correspondences
from clothuntangle.mesh import build_topology
from clothuntangle.scenes import grid_sheet


def crumpled_pair(res, seed):
    rng = np.random.default_rng(seed)
    xa, fa = grid_sheet(res, res, 1.0, 1.0)
    # offset the second grid by a fraction of a cell so no edge of one sheet
    # lies exactly in the vertical plane of an edge of the other
    h = 1.0 / res
    xb, fb = grid_sheet(res, res, 1.0, 1.0, z=0.01, center=(0.37 * h, 0.23 * h))
    xa[:, 2] += rng.normal(0, 0.02, len(xa))
    xb[:, 2] += rng.normal(0, 0.02, len(xb))
    x = np.concatenate([xa, xb])
    faces = np.concatenate([fa, fb + len(xa)])
    return build_topology(x, faces), x


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--resolutions", type=int, nargs="+", default=[16, 32, 48])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.cython_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the numpy fallback only")
    previous = kernels.BACKEND
    print(f"{'faces':>7} {'task':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    try:
        for res in args.resolutions:
            mesh, x = crumpled_pair(res, args.seed)
            tasks = {
                "intersections": lambda: len(detect_intersections(mesh, x)),
                "correspondences": lambda: len(find_cloth_correspondences(mesh, x, x, eps=0.01)),
            }
            for name, fn in tasks.items():
                timing, counts = {}, {}
                for b in backends:
                    kernels.use(b)
                    timing[b], counts[b] = best_of(fn, args.repeat)
                if len(set(counts.values())) != 1:
                    raise SystemExit(f"backends disagree on {name}: {counts}")
                speed = timing["python"] / timing["cython"] if "cython" in timing else float("nan")
                cells = "".join(f"{timing[b] * 1e3:>10.1f}ms" for b in backends)
                print(f"{mesh.n_faces:>7} {name:<16}{cells}{speed:>9.1f}x")
    finally:
        kernels.use(previous)


if __name__ == "__main__":
    main()
