"""Discrete collision detection and proximity queries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bvh import BvhTree, build_bvh, build_point_bvh

DEFAULT_CLOTH_EPS = 0.01
DEFAULT_BODY_EPS = 0.03


@dataclass(frozen=True)
class EdgeFaceCrossing:
    edge: tuple[int, int]
    host_face: int
    s: float
    point: np.ndarray


@dataclass(frozen=True)
class TriPairIntersection:
    face_a: int
    face_b: int
    crossings: tuple[EdgeFaceCrossing, EdgeFaceCrossing]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.crossings[0].point - self.crossings[1].point))


class IntersectionSet:
    """Intersecting face pairs stored column-wise.

    ``edges[i, j]`` is the ``(low, high)`` vertex pair of crossing ``j`` of
    pair ``i``; it passes through face ``hosts[i, j]`` at relative coordinate
    ``s[i, j]`` and position ``points[i, j]``.
    """

    def __init__(self, face_a, face_b, edges, hosts, s, points):
        self.face_a = np.asarray(face_a, dtype=np.int64)
        self.face_b = np.asarray(face_b, dtype=np.int64)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2, 2)
        self.hosts = np.asarray(hosts, dtype=np.int64).reshape(-1, 2)
        self.s = np.asarray(s, dtype=np.float64).reshape(-1, 2)
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 2, 3)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, 2, 2)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2, 3)))

    def __len__(self):
        return len(self.face_a)

    def __getitem__(self, i) -> TriPairIntersection:
        cr = tuple(
            EdgeFaceCrossing((int(self.edges[i, j, 0]), int(self.edges[i, j, 1])), int(self.hosts[i, j]),
                             float(self.s[i, j]), self.points[i, j].copy())
            for j in range(2)
        )
        return TriPairIntersection(int(self.face_a[i]), int(self.face_b[i]), cr)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, mask) -> "IntersectionSet":
        """The pairs selected by a boolean mask or index array."""
        return IntersectionSet(self.face_a[mask], self.face_b[mask], self.edges[mask], self.hosts[mask],
                               self.s[mask], self.points[mask])

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.face_a.tolist(), self.face_b.tolist()))

    def crossing_keys(self) -> np.ndarray:
        """``(n, 2, 3)`` array of ``(edge_low, edge_high, host_face)`` per crossing."""
        return np.concatenate([self.edges, self.hosts[:, :, None]], axis=2)

    def segment_vectors(self) -> np.ndarray:
        return self.points[:, 0] - self.points[:, 1]


def tri_tri_intersect(tri_a, tri_b) -> TriPairIntersection | None:
    """Intersect two triangles given as ``(3, 3)`` vertex arrays.

    Vertex ids 0-2 belong to ``tri_a`` and 3-5 to ``tri_b``; face ids are 0 and
    1. Returns ``None`` for disjoint, coplanar or merely touching triangles.
    """
    x = np.ascontiguousarray(np.concatenate([np.asarray(tri_a, float), np.asarray(tri_b, float)]))
    faces = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int64)
    res = IntersectionSet(*_narrow(x, faces, np.array([0]), np.array([1])))
    return res[0] if len(res) else None


def _narrow(x, faces, fa, fb):
    fa = np.ascontiguousarray(fa, dtype=np.int64)
    fb = np.ascontiguousarray(fb, dtype=np.int64)
    ok, edges, hosts, s, pts = kernels.tri_tri_batch(x, faces, fa, fb)
    ok = np.asarray(ok, dtype=bool)
    return fa[ok], fb[ok], edges[ok], hosts[ok], s[ok], pts[ok]


def detect_intersections(mesh, positions, bvh: BvhTree | None = None) -> IntersectionSet:
    """All intersecting non-adjacent face pairs, each once with ``face_a < face_b``."""
    x = np.ascontiguousarray(positions, dtype=np.float64)
    if mesh.n_faces < 2:
        return IntersectionSet.empty()
    if bvh is None:
        bvh = build_bvh(mesh, x)
    fa, fb = bvh.self_pairs()
    if len(fa) == 0:
        return IntersectionSet.empty()
    tri_a, tri_b = mesh.faces[fa], mesh.faces[fb]
    adjacent = (tri_a[:, :, None] == tri_b[:, None, :]).any(axis=(1, 2))
    fa, fb = fa[~adjacent], fb[~adjacent]
    return IntersectionSet(*_narrow(x, mesh.faces, fa, fb))


def count_intersections(mesh, positions) -> int:
    return len(detect_intersections(mesh, positions))


@dataclass(frozen=True)
class Correspondence:
    node: int
    face: int
    d_curr: float
    d_prev: float
    repulsive: bool


class CorrespondenceSet:
    """Node-face proximity pairs stored column-wise.

    ``bary`` holds the barycentric coordinates of the node's projection onto
    the face at detection time. ``repulsive`` is filled in by classification.
    """

    def __init__(self, node, face, d_curr, d_prev, bary, repulsive=None):
        self.node = np.asarray(node, dtype=np.int64)
        self.face = np.asarray(face, dtype=np.int64)
        self.d_curr = np.asarray(d_curr, dtype=np.float64)
        self.d_prev = np.asarray(d_prev, dtype=np.float64)
        self.bary = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
        if repulsive is None:
            repulsive = np.ones(len(self.node), dtype=bool)
        self.repulsive = np.asarray(repulsive, dtype=bool)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 3)))

    def __len__(self):
        return len(self.node)

    def __getitem__(self, i) -> Correspondence:
        return Correspondence(int(self.node[i]), int(self.face[i]), float(self.d_curr[i]),
                              float(self.d_prev[i]), bool(self.repulsive[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, mask) -> "CorrespondenceSet":
        mask = np.asarray(mask)
        return CorrespondenceSet(self.node[mask], self.face[mask], self.d_curr[mask], self.d_prev[mask],
                                 self.bary[mask], self.repulsive[mask])

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.node.tolist(), self.face.tolist()))


def signed_plane_distance(x, faces, nodes, fids) -> np.ndarray:
    tri = faces[fids]
    a, b, c = x[tri[:, 0]], x[tri[:, 1]], x[tri[:, 2]]
    cr = np.cross(b - a, c - a)
    nrm = np.linalg.norm(cr, axis=1)
    n = cr / np.where(nrm > 0, nrm, 1.0)[:, None]
    return np.einsum("ij,ij->i", x[nodes] - a, n)


def find_cloth_correspondences(mesh, positions, prev_positions, bvh: BvhTree | None = None,
                               eps: float = DEFAULT_CLOTH_EPS) -> CorrespondenceSet:
    """Node-face pairs closer than ``eps`` whose normal projection lands inside the face.

    ``d_prev`` is the same node-face distance measured at ``prev_positions``;
    when it vanishes the pair takes the sign of ``d_curr`` with magnitude
    ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.ascontiguousarray(positions, dtype=np.float64)
    xp = np.ascontiguousarray(prev_positions, dtype=np.float64)
    if mesh.n_faces == 0 or len(x) == 0:
        return CorrespondenceSet.empty()
    if bvh is None:
        bvh = build_bvh(mesh, x)
    used = np.unique(mesh.faces)
    q, f = bvh.query(x[used] - eps, x[used] + eps)
    nodes = used[q]
    ok, d, bary = kernels.point_face_batch(x, mesh.faces, np.ascontiguousarray(nodes), f, eps)
    ok = np.asarray(ok, dtype=bool)
    nodes, f, d, bary = nodes[ok], f[ok], d[ok], bary[ok]
    d_prev = signed_plane_distance(xp, mesh.faces, nodes, f)
    tiny = np.abs(d_prev) < 1e-15
    d_prev[tiny] = np.where(d[tiny] < 0, -eps, eps)
    return CorrespondenceSet(nodes, f, d, d_prev, bary)


def find_body_edges(garment_positions, body_positions, body_bvh: BvhTree | None = None,
                    eps_body: float = DEFAULT_BODY_EPS) -> np.ndarray:
    """``(k, 2)`` array of ``(garment_node, nearest_body_node)`` closer than ``eps_body``."""
    g = np.ascontiguousarray(garment_positions, dtype=np.float64).reshape(-1, 3)
    b = np.ascontiguousarray(body_positions, dtype=np.float64).reshape(-1, 3)
    if len(g) == 0 or len(b) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if body_bvh is None:
        body_bvh = build_point_bvh(b)
    q, bi = body_bvh.query(g - eps_body, g + eps_body)
    d2 = np.einsum("ij,ij->i", g[q] - b[bi], g[q] - b[bi])
    keep = d2 < eps_body * eps_body
    q, bi, d2 = q[keep], bi[keep], d2[keep]
    if len(q) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    key = np.lexsort((bi, d2, q))
    q, bi = q[key], bi[key]
    first = np.ones(len(q), dtype=bool)
    first[1:] = q[1:] != q[:-1]
    return np.stack([q[first], bi[first]], axis=1)


@dataclass
class BodyContacts:
    """Nearest body face per garment node within the search radius."""

    nodes: np.ndarray
    faces: np.ndarray
    closest: np.ndarray
    normals: np.ndarray
    anchor: np.ndarray

    def __len__(self):
        return len(self.nodes)


def nearest_body_faces(garment_positions, body_mesh, body_positions, body_bvh: BvhTree | None = None,
                       radius: float = DEFAULT_BODY_EPS) -> BodyContacts:
    """For each garment node, the closest body face within ``radius``.

    ``anchor`` is a point on the face plane (its first vertex) and ``normals``
    the face unit normal; both are frozen for the energy that uses them.
    """
    g = np.ascontiguousarray(garment_positions, dtype=np.float64).reshape(-1, 3)
    xb = np.ascontiguousarray(body_positions, dtype=np.float64)
    empty = BodyContacts(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    if body_mesh is None or body_mesh.n_faces == 0 or len(g) == 0:
        return empty
    if body_bvh is None:
        body_bvh = build_bvh(body_mesh, xb)
    q, f = body_bvh.query(g - radius, g + radius)
    if len(q) == 0:
        return empty
    d2, cp = kernels.point_triangle_batch(np.ascontiguousarray(g[q]), xb, body_mesh.faces, f)
    keep = d2 <= radius * radius
    q, f, d2, cp = q[keep], f[keep], d2[keep], cp[keep]
    if len(q) == 0:
        return empty
    key = np.lexsort((f, d2, q))
    q, f, cp = q[key], f[key], cp[key]
    first = np.ones(len(q), dtype=bool)
    first[1:] = q[1:] != q[:-1]
    q, f, cp = q[first], f[first], cp[first]
    tri = body_mesh.faces[f]
    a, b, c = xb[tri[:, 0]], xb[tri[:, 1]], xb[tri[:, 2]]
    cr = np.cross(b - a, c - a)
    n = cr / np.maximum(np.linalg.norm(cr, axis=1), 1e-300)[:, None]
    return BodyContacts(q, f, cp, n, a)
