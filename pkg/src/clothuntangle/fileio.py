"""File formats: OBJ meshes, ``.mseq`` body motion, run config, stats CSV and debug dumps.

The ``.mseq`` container is little-endian throughout::

    magic      5 bytes   b"MSEQ1"
    n_vertices uint64
    n_faces    uint64
    fps        float64
    n_frames   uint64
    faces      int64[n_faces, 3]
    frames     float64[n_frames, n_vertices, 3]   (row-major by vertex)
"""
from __future__ import annotations

import csv
import dataclasses
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contours import contour_polyline
from .energy import MaterialParams
from .mesh import GarmentPiece
from .solver import ENERGY_TERMS, SolverConfig, StatsRecord

MSEQ_MAGIC = b"MSEQ1"
_HEADER = struct.Struct("<5sQQdQ")

STATS_COLUMNS = (["frame", "intersectingPairs", "icLoss"] + [f"E_{t}" for t in ENERGY_TERMS]
                 + ["innerIters", "wallTimeMs", "graphRefreshes", "lineSearchStalls"])


class ParseError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class NonTriangulableFace(ParseError):
    pass


class MotionFormatError(ValueError):
    pass


class TruncatedFile(MotionFormatError):
    pass


class CountMismatch(MotionFormatError):
    pass


class ConfigError(ValueError):
    pass


class IoError(OSError):
    pass


# OBJ -------------------------------------------------------------------

@dataclass
class ObjMesh:
    positions: np.ndarray
    faces: np.ndarray
    vertex_groups: list[tuple[str, int, int]] = field(default_factory=list)
    face_groups: list[tuple[str, int, int]] = field(default_factory=list)

    def pieces(self) -> list[GarmentPiece] | None:
        """Garment pieces when every vertex group has a matching face group."""
        if not self.vertex_groups:
            return None
        fmap = {name: (a, b) for name, a, b in self.face_groups}
        out = []
        for name, a, b in self.vertex_groups:
            out.append(GarmentPiece(name, (a, b), fmap.get(name, (0, 0))))
        return out


def _group_ranges(labels: list[str | None]) -> list[tuple[str, int, int]]:
    out: list[tuple[str, int, int]] = []
    for i, name in enumerate(labels):
        if name is None:
            continue
        if out and out[-1][0] == name and out[-1][2] == i:
            out[-1] = (name, out[-1][1], i + 1)
        else:
            out.append((name, i, i + 1))
    return out


def read_obj_mesh(path) -> ObjMesh:
    """Parse ``v``/``f`` records, fanning polygons as (v0, vk, vk+1).

    ``o`` names label the vertices that follow and ``o``/``g`` names label the
    faces that follow. ``vn``/``vt`` records are ignored with a warning.
    """
    path = Path(path)
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    vlabels: list[str | None] = []
    flabels: list[str | None] = []
    obj_name = group_name = None
    ignored = 0
    try:
        lines = path.read_text().splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError("not a text file", None, path) from exc
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        if key == "v":
            if len(tok) < 4:
                raise ParseError("vertex needs three coordinates", ln, path)
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError as exc:
                raise ParseError(f"bad vertex coordinate in {line!r}", ln, path) from exc
            vlabels.append(obj_name)
        elif key == "f":
            idx = []
            for t in tok[1:]:
                head = t.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError as exc:
                    raise ParseError(f"bad face index {t!r}", ln, path) from exc
                if k == 0:
                    raise ParseError("face index 0 is invalid in OBJ", ln, path)
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise ParseError(f"face index {t} out of range", ln, path)
                idx.append(k)
            if len(idx) < 3:
                raise NonTriangulableFace(f"face with {len(idx)} vertices", ln, path)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
                flabels.append(group_name if group_name is not None else obj_name)
        elif key == "o":
            obj_name = " ".join(tok[1:]) or None
            group_name = None
        elif key == "g":
            group_name = " ".join(tok[1:]) or None
        elif key in ("vn", "vt"):
            ignored += 1
    if ignored:
        warnings.warn(f"{path}: ignored {ignored} vn/vt records", stacklevel=2)
    pos = np.array(verts, dtype=np.float64).reshape(-1, 3)
    fc = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return ObjMesh(pos, fc, _group_ranges(vlabels), _group_ranges(flabels))


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    m = read_obj_mesh(path)
    return m.positions, m.faces


def write_obj(path, positions, faces, pieces: list[GarmentPiece] | None = None):
    """Write vertices (9 significant digits) and 1-based triangle faces.

    With ``pieces`` each piece's vertices follow an ``o`` record and its
    faces a ``g`` record of the same name.
    """
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    out = ["# clothuntangle mesh"]
    vfmt = "v {:.9g} {:.9g} {:.9g}"
    if pieces:
        for p in pieces:
            out.append(f"o {p.label}")
            out += [vfmt.format(*r) for r in x[p.vertices[0]:p.vertices[1]]]
        for p in pieces:
            out.append(f"g {p.label}")
            out += ["f {} {} {}".format(*(r + 1)) for r in f[p.faces[0]:p.faces[1]]]
    else:
        out += [vfmt.format(*r) for r in x]
        out += ["f {} {} {}".format(*(r + 1)) for r in f]
    _write_text(path, "\n".join(out) + "\n")


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# motion sequences --------------------------------------------------------

@dataclass
class MotionSequence:
    faces: np.ndarray
    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        fr = np.asarray(self.frames, dtype=np.float64)
        if fr.size == 0 and fr.ndim < 3:
            fr = fr.reshape(0, 0, 3)
        self.frames = fr
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise CountMismatch("frames must have shape (n_frames, n_vertices, 3)")
        if not self.fps > 0:
            raise MotionFormatError("fps must be positive")
        if len(self.faces) and self.faces.max(initial=-1) >= self.n_vertices:
            raise CountMismatch("face index exceeds vertex count")

    @property
    def n_vertices(self) -> int:
        return self.frames.shape[1]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def write_motion_sequence(path, seq: MotionSequence):
    head = _HEADER.pack(MSEQ_MAGIC, seq.n_vertices, len(seq.faces), float(seq.fps), seq.n_frames)
    body = seq.faces.astype("<i8").tobytes() + seq.frames.astype("<f8").tobytes()
    try:
        Path(path).write_bytes(head + body)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_motion_sequence(path) -> MotionSequence:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFile(f"{path}: header needs {_HEADER.size} bytes, file has {len(data)}")
    magic, nv, nf, fps, nfr = _HEADER.unpack_from(data, 0)
    if magic != MSEQ_MAGIC:
        raise MotionFormatError(f"{path}: bad magic {magic!r}")
    need = _HEADER.size + 24 * nf + 24 * nv * nfr
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, file has {len(data)}")
    if len(data) > need:
        raise CountMismatch(f"{path}: {len(data) - need} trailing bytes after {nfr} frames")
    off = _HEADER.size
    faces = np.frombuffer(data, dtype="<i8", count=3 * nf, offset=off).reshape(nf, 3).astype(np.int64)
    off += 24 * nf
    frames = np.frombuffer(data, dtype="<f8", count=3 * nv * nfr, offset=off).reshape(nfr, nv, 3)
    if nf and (faces.min() < 0 or faces.max() >= nv):
        raise CountMismatch(f"{path}: face index outside [0, {nv})")
    return MotionSequence(faces, frames.astype(np.float64), fps)


# stats ---------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def stats_row(rec: StatsRecord) -> list[str]:
    return ([str(rec.frame), str(rec.intersecting_pairs), _fmt(rec.ic_loss)]
            + [_fmt(rec.energies.get(t, 0.0)) for t in ENERGY_TERMS]
            + [str(rec.inner_iters), _fmt(rec.wall_time_ms), str(rec.graph_refreshes),
               str(rec.line_search_stalls)])


class StatsWriter:
    """Streams stats rows to a CSV file; usable as a ``simulate_sequence`` sink."""

    def __init__(self, path):
        try:
            self._fh = open(path, "w", newline="")
        except OSError as exc:
            raise IoError(f"cannot open {path}: {exc}") from exc
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(STATS_COLUMNS)

    def __call__(self, rec: StatsRecord):
        self._w.writerow(stats_row(rec))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_stats_csv(records, path):
    with StatsWriter(path) as w:
        for r in records:
            w(r)


def read_stats_csv(path) -> list[StatsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != STATS_COLUMNS:
        raise ParseError("unexpected stats header", 1, path)
    out = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(STATS_COLUMNS):
            raise ParseError(f"expected {len(STATS_COLUMNS)} columns, got {len(row)}", ln, path)
        try:
            k = 3 + len(ENERGY_TERMS)
            out.append(StatsRecord(
                int(row[0]), int(row[1]), float(row[2]),
                {t: float(v) for t, v in zip(ENERGY_TERMS, row[3:k])},
                int(row[k]), float(row[k + 1]), int(row[k + 2]), int(row[k + 3])))
        except ValueError as exc:
            raise ParseError(str(exc), ln, path) from exc
    return out


def write_trajectory_csv(trajectory, path):
    lines = ["iteration,intersectingPairs"] + [f"{i},{c}" for i, c in enumerate(trajectory)]
    _write_text(path, "\n".join(lines) + "\n")


# config --------------------------------------------------------------------

_MATERIAL_KEYS = {f.name for f in dataclasses.fields(MaterialParams)}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)} - {"material"}


def config_from_dict(data: dict) -> SolverConfig:
    """Build a config from flat keys; unknown keys raise ``ConfigError``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _MATERIAL_KEYS - _SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    mat = {k: v for k, v in data.items() if k in _MATERIAL_KEYS}
    sol = {k: v for k, v in data.items() if k in _SOLVER_KEYS}
    try:
        return SolverConfig(material=MaterialParams(**mat), **sol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: SolverConfig) -> dict:
    out = {}
    for f in dataclasses.fields(SolverConfig):
        if f.name == "material":
            continue
        v = getattr(cfg, f.name)
        if hasattr(v, "value"):
            v = v.value
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    for f in dataclasses.fields(MaterialParams):
        v = getattr(cfg.material, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def load_config(path) -> SolverConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, path) from exc
    return config_from_dict(data)


def save_config(path, cfg: SolverConfig | dict):
    data = cfg if isinstance(cfg, dict) else config_to_dict(cfg)
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# debug dumps -----------------------------------------------------------------

def graph_to_dict(graph) -> dict:
    contours = []
    for c in graph.contours:
        contours.append({
            "closed": bool(c.closed),
            "demoted": bool(c.demoted),
            "segments": [int(s) for s in c.segments],
            "touched_nodes": sorted(int(v) for v in c.touched_nodes),
            "inside_nodes": sorted(int(v) for v in c.inside_nodes),
        })
    return {
        "summary": graph.summary(),
        "garment_edges": int(len(graph.garment_edges)),
        "body_edges": graph.body_edges.tolist(),
        "repulsive": np.stack([graph.repulsive.node, graph.repulsive.face], 1).tolist(),
        "non_repulsive": np.stack([graph.non_repulsive.node, graph.non_repulsive.face], 1).tolist(),
        "intersecting_pairs": np.stack([graph.intersections.face_a, graph.intersections.face_b], 1).tolist(),
        "contours": contours,
    }


def write_graph_json(path, graph):
    _write_text(path, json.dumps(graph_to_dict(graph), indent=1) + "\n")


def write_contours_obj(path, contours, intersections):
    """One ``o`` object and ``l`` polyline per contour."""
    out = ["# intersection contours"]
    base = 0
    for k, c in enumerate(contours):
        pts = contour_polyline(c, intersections)
        kind = "closed" if c.closed else "open"
        out.append(f"o contour{k}_{kind}")
        out += ["v {:.9g} {:.9g} {:.9g}".format(*p) for p in pts]
        if len(pts) >= 2:
            ids = [base + i + 1 for i in range(len(pts))] + ([base + 1] if c.closed else [])
            out.append("l " + " ".join(map(str, ids)))
        base += len(pts)
    _write_text(path, "\n".join(out) + "\n")
