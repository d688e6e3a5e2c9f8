"""Intersection contours and the repelled/non-repelled node taxonomy.

Intersecting face pairs are chained into contours through shared crossings:
two pairs are adjacent when one edge passes through the same host face in
both, which makes the contour polyline continuous at that point. A closed
contour cuts each mesh piece it crosses; the smaller side is "inside".
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .collision import CorrespondenceSet, IntersectionSet


class SplitFailed(RuntimeError):
    pass


@dataclass
class IntersectionContour:
    segments: list[int]
    closed: bool
    touched_nodes: frozenset[int]
    cut_edges: frozenset[tuple[int, int]]
    inside_nodes: frozenset[int] = frozenset()
    outside_nodes: frozenset[int] = frozenset()
    demoted: bool = False

    def __len__(self):
        return len(self.segments)


@dataclass
class NodeClassification:
    non_repelled: np.ndarray = field(repr=False)

    @property
    def repelled(self) -> np.ndarray:
        return ~self.non_repelled

    def histogram(self) -> dict[str, int]:
        nr = int(self.non_repelled.sum())
        return {"repelled": len(self.non_repelled) - nr, "non_repelled": nr}


def _adjacency(intersections: IntersectionSet):
    """Links between pairs that share a crossing ``(edge, host_face)``."""
    keys = intersections.crossing_keys().reshape(-1, 3)
    owner = np.repeat(np.arange(len(intersections)), 2)
    groups: dict[tuple[int, int, int], list[int]] = {}
    for k, o in zip(map(tuple, keys.tolist()), owner.tolist()):
        groups.setdefault(k, []).append(o)
    links: dict[int, list[int]] = {i: [] for i in range(len(intersections))}
    multiplicity: dict[int, list[int]] = {i: [] for i in range(len(intersections))}
    for k, members in groups.items():
        for o in members:
            multiplicity[o].append(len(members))
        for i in members:
            for j in members:
                if i != j:
                    links[i].append(j)
    return links, multiplicity


def make_contours(intersections: IntersectionSet, mesh) -> list[IntersectionContour]:
    """Chain intersecting pairs into contours; every pair lands in exactly one."""
    n = len(intersections)
    if n == 0:
        return []
    links, mult = _adjacency(intersections)
    seen = np.zeros(n, dtype=bool)
    contours = []
    for start in range(n):
        if seen[start]:
            continue
        comp = []
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in links[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        comp.sort()
        simple = all(len(set(links[i])) == len(links[i]) and all(m <= 2 for m in mult[i]) for i in comp)
        closed = simple and len(comp) >= 3 and all(len(links[i]) == 2 for i in comp)
        if simple:
            ends = [i for i in comp if len(links[i]) < 2]
            order = _walk(ends[0] if ends else comp[0], links)
        else:
            order = comp
        faces = np.concatenate([intersections.face_a[order], intersections.face_b[order]])
        touched = frozenset(np.unique(mesh.faces[faces]).tolist())
        cut = frozenset(map(tuple, intersections.edges[order].reshape(-1, 2).tolist()))
        contours.append(IntersectionContour(list(order), closed, touched, cut))
    for c in contours:
        if c.closed:
            try:
                c.inside_nodes, c.outside_nodes = split_by_closed_contour(c, mesh)
            except SplitFailed:
                c.closed = False
                c.demoted = True
    return contours


def _walk(start: int, links) -> list[int]:
    order = [start]
    prev, cur = -1, start
    while True:
        nxt = [j for j in sorted(links[cur]) if j != prev]
        if not nxt or nxt[0] == start:
            return order
        prev, cur = cur, nxt[0]
        order.append(cur)


def _components(n_vertices: int, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.arange(n_vertices)
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices))
    return connected_components(g, directed=False)[1]


def split_by_closed_contour(contour: IntersectionContour, mesh) -> tuple[frozenset[int], frozenset[int]]:
    """Flood-fill each mesh piece the contour cuts, barred from its cut edges.

    In every piece that falls apart, the component with the fewest nodes is
    inside (ties go to the component holding the lowest vertex index); the
    rest of that piece is outside.

    Raises
    ------
    SplitFailed
        When no piece is separated by the contour's cut edges.
    """
    nv = mesh.n_vertices
    pieces = _components(nv, mesh.edges)
    if contour.cut_edges:
        cut = np.array(sorted(contour.cut_edges), dtype=np.int64)
        cut_id = cut[:, 0] * nv + cut[:, 1]
        edge_id = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
        kept = mesh.edges[~np.isin(edge_id, cut_id)]
    else:
        kept = mesh.edges
    parts = _components(nv, kept)
    inside: set[int] = set()
    outside: set[int] = set()
    touched = np.array(sorted(contour.touched_nodes), dtype=np.int64)
    for piece in np.unique(pieces[touched]):
        members = np.nonzero(pieces == piece)[0]
        labels = parts[members]
        uniq, counts = np.unique(labels, return_counts=True)
        if len(uniq) < 2:
            continue
        lowest = np.array([members[labels == u].min() for u in uniq])
        pick = uniq[np.lexsort((lowest, counts))[0]]
        inside.update(members[labels == pick].tolist())
        outside.update(members[labels != pick].tolist())
    if not inside:
        raise SplitFailed("closed contour does not separate any mesh piece")
    return frozenset(inside), frozenset(outside)


def remove_nested(contours: list[IntersectionContour]) -> list[IntersectionContour]:
    """Drop closed contours whose touched nodes all lie inside another closed contour."""
    closed = [c for c in contours if c.closed]
    out = []
    for c in contours:
        if c.closed and any(
            d is not c
            and c.touched_nodes <= d.inside_nodes
            and not d.touched_nodes <= c.inside_nodes
            for d in closed
        ):
            continue
        out.append(c)
    return out


def classify_nodes(contours: list[IntersectionContour], mesh) -> NodeClassification:
    """Mark open-contour touched nodes and closed-contour inside nodes as non-repelled."""
    nr = np.zeros(mesh.n_vertices, dtype=bool)
    for c in contours:
        nodes = c.inside_nodes if c.closed else c.touched_nodes
        if nodes:
            nr[np.fromiter(nodes, dtype=np.int64)] = True
    return NodeClassification(nr)


def classify_correspondences(corr: CorrespondenceSet, classification: NodeClassification, mesh):
    """Split correspondences into ``(repulsive, non_repulsive)``.

    A correspondence is repulsive only when its node and all three face
    vertices are repelled. ``corr.repulsive`` is updated in place.
    """
    nr = classification.non_repelled
    if len(corr) == 0:
        return corr.subset(np.zeros(0, dtype=bool)), corr.subset(np.zeros(0, dtype=bool))
    bad = nr[corr.node] | nr[mesh.faces[corr.face]].any(axis=1)
    corr.repulsive = ~bad
    return corr.subset(~bad), corr.subset(bad)


def contour_polyline(contour: IntersectionContour, intersections: IntersectionSet) -> np.ndarray:
    """Ordered crossing points along the contour (closed contours repeat no point)."""
    keys = intersections.crossing_keys()
    pts = []
    segs = contour.segments
    if len(segs) == 1:
        return intersections.points[segs[0]].copy()
    for idx, i in enumerate(segs):
        nxt = segs[(idx + 1) % len(segs)] if (contour.closed or idx + 1 < len(segs)) else None
        shared = None
        if nxt is not None:
            for j in range(2):
                if any((keys[i, j] == keys[nxt, m]).all() for m in range(2)):
                    shared = j
                    break
        if idx == 0 and not contour.closed:
            first = 1 - shared if shared is not None else 0
            pts.append(intersections.points[i, first])
        if shared is not None:
            pts.append(intersections.points[i, shared])
        elif idx == len(segs) - 1 and not contour.closed:
            prev_keys = keys[segs[idx - 1]]
            j = 0 if any((keys[i, 0] == prev_keys[m]).all() for m in range(2)) else 1
            pts.append(intersections.points[i, 1 - j])
    return np.array(pts)
