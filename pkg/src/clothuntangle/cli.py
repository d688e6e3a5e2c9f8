"""Command-line front end.

Exit codes: 0 clean, 1 internal error, 2 input error, 3 unresolved or still
intersecting.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .collision import detect_intersections
from .graph import GraphConfig, build_input_graph
from .icloss import ic_loss_value
from .mesh import MeshError, build_topology
from .scenes import KINDS, InvalidRecipe, SceneRecipe, generate
from .solver import (Ablation, NonFiniteState, ResolveStatus, SimState, SimulationError, resolve_static,
                     simulate_sequence)

log = logging.getLogger("clothuntangle")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_INTERSECTING = 0, 1, 2, 3

INPUT_ERRORS = (OSError, fileio.ParseError, fileio.MotionFormatError, fileio.ConfigError, MeshError,
                InvalidRecipe)


REST_HELP = "rest-shape .obj with the garment's faces (default: the garment itself)"


def _load_garment(path, density, rest_path=None):
    """Load a garment OBJ; its rest shape comes from ``rest_path`` when given."""
    obj = fileio.read_obj_mesh(path)
    rest = obj
    if rest_path:
        rest = fileio.read_obj_mesh(rest_path)
        if not np.array_equal(rest.faces, obj.faces):
            raise MeshError(f"{rest_path}: faces differ from {path}")
    mesh = build_topology(rest.positions, rest.faces, density=density, pieces=obj.pieces())
    return mesh, obj.positions


def _load_config(path):
    return fileio.load_config(path) if path else fileio.config_from_dict({})


def cmd_genscene(args) -> int:
    recipe = SceneRecipe(args.kind, resolution=args.resolution, scale=args.scale, gap=args.gap,
                         seed=args.seed, frames=args.frames)
    scene = generate(recipe)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_obj(out / "garment.obj", scene.positions, scene.garment.faces, scene.garment.pieces)
    written = [out / "garment.obj"]
    if not np.array_equal(scene.positions, scene.garment.positions):
        fileio.write_obj(out / "rest.obj", scene.garment.positions, scene.garment.faces, scene.garment.pieces)
        written.append(out / "rest.obj")
    if scene.body is not None:
        seq = fileio.MotionSequence(scene.body.faces, np.stack(scene.body_frames), scene.fps)
    else:
        seq = fileio.MotionSequence(np.zeros((0, 3), np.int64), np.zeros((recipe.frames, 0, 3)), scene.fps)
    fileio.write_motion_sequence(out / "body.mseq", seq)
    cfg = fileio.config_to_dict(fileio.config_from_dict(scene.config))
    fileio.save_config(out / "config.json", cfg)
    written += [out / "body.mseq", out / "config.json"]
    print("wrote " + ", ".join(str(w) for w in written))
    return EXIT_OK


ANALYZE_COLUMNS = ["frame", "intersectingPairs", "icLoss", "contoursOpen", "contoursClosed",
                   "repelled", "nonRepelled"]


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    path = Path(args.inp)
    if path.suffix.lower() == ".mseq":
        seq = fileio.read_motion_sequence(path)
        mesh = build_topology(seq.frames[0] if seq.n_frames else np.zeros((0, 3)), seq.faces,
                              density=cfg.material.density)
        frames = list(seq.frames)
    else:
        mesh, x = _load_garment(path, cfg.material.density)
        frames = [x]
    gcfg = GraphConfig(cfg.eps_cloth, cfg.eps_body, cfg.classify)
    rows, graph = [], None
    for i, x in enumerate(frames):
        graph = build_input_graph(mesh, x, x, config=gcfg)
        s = graph.summary()
        rows.append([i, s["intersecting_pairs"], repr(ic_loss_value(graph.intersections)), s["contours_open"],
                     s["contours_closed"], s["repelled"], s["non_repelled"]])
        print(f"frame {i}: pairs={s['intersecting_pairs']} open={s['contours_open']} "
              f"closed={s['contours_closed']} repelled={s['repelled']} non_repelled={s['non_repelled']}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ANALYZE_COLUMNS)
            w.writerows(rows)
    if args.contours and graph is not None:
        fileio.write_contours_obj(args.contours, graph.contours, graph.intersections)
    if args.graph and graph is not None:
        fileio.write_graph_json(args.graph, graph)
    final = rows[-1][1] if rows else 0
    return EXIT_OK if final == 0 else EXIT_INTERSECTING


def cmd_resolve(args) -> int:
    cfg = _load_config(args.config)
    mesh, x = _load_garment(args.inp, cfg.material.density, args.rest)
    res = resolve_static(SimState.at_rest(x), mesh, config=cfg)
    out = Path(args.out)
    fileio.write_obj(out, res.state.positions, mesh.faces, mesh.pieces)
    traj = Path(args.trajectory) if args.trajectory else out.with_name(out.stem + "_trajectory.csv")
    fileio.write_trajectory_csv(res.trajectory, traj)
    print(f"{res.status.value} after {res.iterations} iterations: "
          f"{res.trajectory[0]} -> {res.trajectory[-1]} intersecting pairs")
    if res.status is not ResolveStatus.RESOLVED:
        return EXIT_INTERSECTING
    # the OBJ holds rounded coordinates; judge what a reader of the file will see
    written = len(detect_intersections(mesh, fileio.read_obj(out)[0]))
    if written:
        print(f"rounded output has {written} intersecting pairs", file=sys.stderr)
        return EXIT_INTERSECTING
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    cfg.ablation = Ablation.parse(args.ablation)
    mesh, x = _load_garment(args.garment, cfg.material.density, args.rest)
    seq = fileio.read_motion_sequence(args.body)
    body = build_topology(seq.frames[0], seq.faces) if seq.n_vertices and len(seq.faces) else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def dump(frame, pos):
        fileio.write_obj(out / f"frame_{frame:04d}.obj", pos, mesh.faces, mesh.pieces)

    with fileio.StatsWriter(out / "stats.csv") as sink:
        records = simulate_sequence(mesh, x, body, list(seq.frames), cfg, sink=sink,
                                    dump=dump, dump_every=args.dump_every)
    final = records[-1].intersecting_pairs if records else len(detect_intersections(mesh, x))
    mean = float(np.mean([r.intersecting_pairs for r in records])) if records else float(final)
    print(f"{len(records)} frames, ablation {cfg.ablation.value}: mean intersecting pairs {mean:.2f}, final {final}")
    return EXIT_OK if final == 0 else EXIT_INTERSECTING


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clothuntangle", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genscene", help="generate a synthetic garment scene")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resolution", type=int, default=24, help="grid cells per sheet side")
    p.add_argument("--scale", type=float, default=0.6, help="sheet side length in m")
    p.add_argument("--gap", type=float, default=0.01, help="layer spacing in m")
    p.add_argument("--frames", type=int, default=100, help="frames in the body sequence")
    p.set_defaults(func=cmd_genscene)

    p = sub.add_parser("analyze", help="report intersections, contours and node classes")
    p.add_argument("--in", dest="inp", required=True, help="garment .obj or garment .mseq")
    p.add_argument("--csv", help="per-frame stats output")
    p.add_argument("--config", help="config.json (for eps values)")
    p.add_argument("--contours", help="contour polyline .obj for the last frame")
    p.add_argument("--graph", help="graph JSON dump for the last frame")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("resolve", help="untangle a static mesh")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="untangled .obj")
    p.add_argument("--trajectory", help="per-iteration count CSV (default: next to --out)")
    p.add_argument("--rest", help=REST_HELP)
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("simulate", help="simulate a garment over a body sequence")
    p.add_argument("--garment", required=True)
    p.add_argument("--body", required=True, help="body .mseq (its frame count sets the length)")
    p.add_argument("--config")
    p.add_argument("--rest", help=REST_HELP)
    p.add_argument("--ablation", default="ours", choices=[a.value for a in Ablation])
    p.add_argument("--dump-every", type=int, default=0, help="write a mesh every N frames (0: never)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, NonFiniteState) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
