"""Per-frame interaction graph: mesh edges, body edges and classified world edges."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvh import build_bvh, build_point_bvh
from .collision import (DEFAULT_BODY_EPS, DEFAULT_CLOTH_EPS, CorrespondenceSet, IntersectionSet,
                        detect_intersections, find_body_edges, find_cloth_correspondences)
from .contours import (IntersectionContour, NodeClassification, classify_correspondences,
                       classify_nodes, make_contours, remove_nested)


@dataclass
class GraphConfig:
    eps_cloth: float = DEFAULT_CLOTH_EPS
    eps_body: float = DEFAULT_BODY_EPS
    classify: bool = True


@dataclass
class WorldGraph:
    garment_edges: np.ndarray
    body_edges: np.ndarray
    repulsive: CorrespondenceSet
    non_repulsive: CorrespondenceSet
    contours: list[IntersectionContour]
    node_class: NodeClassification
    intersections: IntersectionSet = field(repr=False)

    def summary(self) -> dict[str, int]:
        closed = sum(1 for c in self.contours if c.closed)
        return {
            "intersecting_pairs": len(self.intersections),
            "contours_open": len(self.contours) - closed,
            "contours_closed": closed,
            "repulsive": len(self.repulsive),
            "non_repulsive": len(self.non_repulsive),
            "body_edges": len(self.body_edges),
            **self.node_class.histogram(),
        }


def build_input_graph(garment_mesh, garment_positions, prev_positions, body_mesh=None, body_positions=None,
                      config: GraphConfig | None = None, bvh=None) -> WorldGraph:
    """Build the interaction graph for one state.

    Steps: mesh edges, body edges, DCD, contour assembly, nested-contour
    removal, cloth correspondences, then repulsive/non-repulsive split. With
    ``config.classify`` off every correspondence is repulsive.
    """
    cfg = config or GraphConfig()
    x = np.ascontiguousarray(garment_positions, dtype=np.float64)
    xp = np.ascontiguousarray(prev_positions, dtype=np.float64)
    nv = garment_mesh.n_vertices

    body_edges = np.zeros((0, 2), dtype=np.int64)
    if body_mesh is not None and body_positions is not None and body_mesh.n_vertices:
        bx = np.asarray(body_positions, dtype=np.float64)
        body_edges = find_body_edges(x, bx, build_point_bvh(bx), cfg.eps_body)

    if garment_mesh.n_faces == 0:
        empty = CorrespondenceSet.empty()
        return WorldGraph(garment_mesh.edges, body_edges, empty, empty, [],
                          NodeClassification(np.zeros(nv, dtype=bool)), IntersectionSet.empty())

    if bvh is None:
        bvh = build_bvh(garment_mesh, x)
    intersections = detect_intersections(garment_mesh, x, bvh)
    contours = remove_nested(make_contours(intersections, garment_mesh))
    corr = find_cloth_correspondences(garment_mesh, x, xp, bvh, cfg.eps_cloth)
    if cfg.classify:
        node_class = classify_nodes(contours, garment_mesh)
        rep, nonrep = classify_correspondences(corr, node_class, garment_mesh)
    else:
        node_class = NodeClassification(np.zeros(nv, dtype=bool))
        corr.repulsive = np.ones(len(corr), dtype=bool)
        rep, nonrep = corr, corr.subset(np.zeros(len(corr), dtype=bool))
    return WorldGraph(garment_mesh.edges, body_edges, rep, nonrep, contours, node_class, intersections)
