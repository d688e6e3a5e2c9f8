"""Triangle mesh container with topology and lumped masses."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

AREA_TOLERANCE = 1e-12


class MeshError(ValueError):
    pass


class DegenerateFace(MeshError):
    pass


class IndexOutOfRange(MeshError):
    pass


class ZeroAreaFace(MeshError):
    pass


@dataclass(frozen=True)
class GarmentPiece:
    """A labelled piece of a combined outfit mesh.

    ``vertices`` and ``faces`` are half-open ``(start, stop)`` index ranges.
    """

    label: str
    vertices: tuple[int, int]
    faces: tuple[int, int]


@dataclass(eq=False)
class TriMesh:
    """Immutable triangle mesh topology.

    Positions used by queries are passed separately; ``positions`` here holds
    the rest configuration the mesh was built from.
    """

    positions: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    edge_faces: list[tuple[int, ...]]
    face_edges: np.ndarray
    vertex_mass: np.ndarray
    density: float
    pieces: list[GarmentPiece] = field(default_factory=list)
    hinges: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), dtype=np.int64))
    nonmanifold_edges: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def rest_lengths(self) -> np.ndarray:
        d = self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def face_areas(self, positions: np.ndarray | None = None) -> np.ndarray:
        x = self.positions if positions is None else positions
        return triangle_areas(x, self.faces)

    def boundary_edges(self) -> np.ndarray:
        return np.array([i for i, f in enumerate(self.edge_faces) if len(f) == 1], dtype=np.int64)

    def vertex_neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        return nbrs

    def piece_of_vertex(self) -> np.ndarray:
        """Connected-component label per vertex (through face connectivity)."""
        parent = np.arange(self.n_vertices)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        return np.array([find(i) for i in range(self.n_vertices)], dtype=np.int64)


def triangle_areas(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def build_topology(positions, faces, density: float = 0.2, pieces=None) -> TriMesh:
    """Build edges, edge-face incidence, hinges and lumped vertex masses.

    Vertex mass is ``density * area / 3`` summed over incident faces, using
    the areas at ``positions`` (taken as the rest state).

    Raises
    ------
    IndexOutOfRange
        If a face references a vertex that does not exist.
    DegenerateFace
        If a face repeats a vertex index.
    """
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if density <= 0:
        raise MeshError(f"density must be positive, got {density}")
    nv = len(x)
    if len(f):
        if f.min() < 0 or f.max() >= nv:
            bad = int(np.nonzero((f < 0).any(axis=1) | (f >= nv).any(axis=1))[0][0])
            raise IndexOutOfRange(f"face {bad} {f[bad].tolist()} references a vertex outside [0, {nv})")
        rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if rep.any():
            bad = int(np.nonzero(rep)[0][0])
            raise DegenerateFace(f"face {bad} {f[bad].tolist()} repeats a vertex")

    # undirected edges, ordered (min, max), in first-seen order of the sorted key
    half = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]) if len(f) else np.zeros((0, 2), np.int64)
    key = np.sort(half, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    nf = len(f)
    face_edges = np.stack([inverse[:nf], inverse[nf:2 * nf], inverse[2 * nf:]], axis=1) if nf else np.zeros((0, 3), np.int64)

    edge_faces: list[list[int]] = [[] for _ in range(len(edges))]
    for fi in range(nf):
        for e in face_edges[fi]:
            edge_faces[e].append(fi)
    nonmanifold = np.array([i for i, ef in enumerate(edge_faces) if len(ef) > 2], dtype=np.int64)
    if len(nonmanifold):
        log.warning("mesh has %d non-manifold edges", len(nonmanifold))

    hinges = []
    for ei, ef in enumerate(edge_faces):
        if len(ef) != 2:
            continue
        i, j = edges[ei]
        fa, fb = ef
        ka = int(f[fa][(f[fa] != i) & (f[fa] != j)][0])
        kb = int(f[fb][(f[fb] != i) & (f[fb] != j)][0])
        # orient the hinge along the winding of the first face
        row = list(f[fa])
        pos = row.index(i)
        if row[(pos + 1) % 3] != j:
            i, j = j, i
        hinges.append((ei, i, j, ka, kb))
    hinges = np.array(hinges, dtype=np.int64).reshape(-1, 5)

    areas = triangle_areas(x, f) if nf else np.zeros(0)
    mass = np.zeros(nv)
    for k in range(3):
        np.add.at(mass, f[:, k], density * areas / 3.0)

    if pieces is None:
        pieces = [GarmentPiece("mesh", (0, nv), (0, nf))]

    return TriMesh(
        positions=x,
        faces=f,
        edges=edges.astype(np.int64),
        edge_faces=[tuple(ef) for ef in edge_faces],
        face_edges=face_edges.astype(np.int64),
        vertex_mass=mass,
        density=float(density),
        pieces=list(pieces),
        hinges=hinges,
        nonmanifold_edges=nonmanifold,
    )


def face_normal(mesh: TriMesh, face_idx: int, positions=None) -> np.ndarray:
    """Unit normal of one face, right-handed with respect to its vertex order."""
    x = mesh.positions if positions is None else np.asarray(positions, dtype=np.float64)
    a, b, c = x[mesh.faces[face_idx]]
    cr = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(cr)
    if area <= AREA_TOLERANCE:
        raise ZeroAreaFace(f"face {face_idx} has area {area:.3e}")
    return cr / (2.0 * area)


def face_normals(x: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals and areas for all faces; zero normal where area vanishes."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    cr = np.cross(b - a, c - a)
    norm = np.linalg.norm(cr, axis=1)
    n = np.zeros_like(cr)
    ok = norm > 2.0 * AREA_TOLERANCE
    n[ok] = cr[ok] / norm[ok, None]
    return n, 0.5 * norm


def merge_meshes(parts, density: float = 0.2) -> TriMesh:
    """Concatenate ``(label, positions, faces)`` parts into one outfit mesh."""
    xs, fs, pieces = [], [], []
    nv = nf = 0
    for label, x, f in parts:
        x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(f, dtype=np.int64).reshape(-1, 3)
        xs.append(x)
        fs.append(f + nv)
        pieces.append(GarmentPiece(label, (nv, nv + len(x)), (nf, nf + len(f))))
        nv += len(x)
        nf += len(f)
    return build_topology(np.concatenate(xs), np.concatenate(fs), density=density, pieces=pieces)
