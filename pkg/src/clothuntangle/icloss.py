"""Intersection contour loss and its split gradient.

Each intersecting face pair contributes ``|p0 - p1|^2`` where ``p_j`` is the
point where crossing edge ``j`` passes through its host face. Differentiating
``p = x0 + s (x1 - x0)`` with respect to an edge endpoint gives two parts:

* distortional, ``dL/dp`` times ``dp/dx`` at fixed ``s``; it lies in the host
  plane and shortens the segment by squeezing the edge;
* translational, ``dL/dp . (x1 - x0)`` times ``ds/dx``; it is parallel to the
  host normal and moves the edge through the host face.

The host face (a point on it and its unit normal) is held fixed, so each
crossing only feeds the two endpoints of its edge.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .collision import IntersectionSet
from .energy import scatter_add

PARALLEL_TOL = 1e-10


class IcGradientMode(enum.Enum):
    TRANSLATIONAL_ONLY = "translational"
    FULL = "full"
    DISTORTIONAL_ONLY = "distortional"

    @classmethod
    def parse(cls, value) -> "IcGradientMode":
        if isinstance(value, cls):
            return value
        aliases = {"translationalonly": "translational", "translational_only": "translational",
                   "distortionalonly": "distortional", "distortional_only": "distortional"}
        key = str(value).strip().lower().replace("-", "_")
        return cls(aliases.get(key, key))


@dataclass
class CrossingComponents:
    """Per-crossing gradient parts, shape ``(n_pairs, 2 crossings, 2 endpoints, 3)``."""

    distortional: np.ndarray
    translational: np.ndarray
    normals: np.ndarray
    valid: np.ndarray


@dataclass
class IcGradient:
    gradient: np.ndarray
    skipped: int


def ic_loss_value(intersections: IntersectionSet, positions=None) -> float:
    """Sum of squared segment lengths over all intersecting pairs."""
    if len(intersections) == 0:
        return 0.0
    seg = intersections.segment_vectors()
    return float(np.sum(seg * seg))


def host_planes(intersections: IntersectionSet, positions, faces):
    """Anchor point and unit normal of the host face of every crossing."""
    x = np.asarray(positions, dtype=np.float64)
    tri = faces[intersections.hosts]
    a, b, c = x[tri[..., 0]], x[tri[..., 1]], x[tri[..., 2]]
    cr = np.cross(b - a, c - a)
    nrm = np.linalg.norm(cr, axis=-1, keepdims=True)
    return a, cr / np.where(nrm > 0, nrm, 1.0)


def crossing_points(intersections: IntersectionSet, positions, planes):
    """Recompute ``s`` and crossing points at ``positions`` against frozen host planes."""
    x = np.asarray(positions, dtype=np.float64)
    anchor, n = planes
    x0 = x[intersections.edges[..., 0]]
    x1 = x[intersections.edges[..., 1]]
    e = x1 - x0
    den = np.einsum("ijk,ijk->ij", n, e)
    s = np.einsum("ijk,ijk->ij", n, anchor - x0) / np.where(den != 0, den, 1.0)
    return s, x0 + s[..., None] * e


def ic_loss_frozen(intersections: IntersectionSet, positions, planes) -> float:
    """Contour loss as a function of edge endpoints with host planes frozen."""
    if len(intersections) == 0:
        return 0.0
    _, p = crossing_points(intersections, positions, planes)
    seg = p[:, 0] - p[:, 1]
    return float(np.sum(seg * seg))


def crossing_components(intersections: IntersectionSet, positions, faces) -> CrossingComponents:
    x = np.asarray(positions, dtype=np.float64)
    n_pairs = len(intersections)
    if n_pairs == 0:
        z = np.zeros((0, 2, 2, 3))
        return CrossingComponents(z, z.copy(), np.zeros((0, 2, 3)), np.zeros((0, 2), bool))
    _, n = host_planes(intersections, x, faces)
    x0 = x[intersections.edges[..., 0]]
    x1 = x[intersections.edges[..., 1]]
    e = x1 - x0
    den = np.einsum("ijk,ijk->ij", n, e)
    valid = np.abs(den) >= PARALLEL_TOL * np.linalg.norm(e, axis=-1)
    safe = np.where(valid, den, 1.0)
    s = intersections.s
    delta = intersections.points[:, 0] - intersections.points[:, 1]
    # dL/dp_j = 2 * sign_j * delta with sign +1 for crossing 0 and -1 for crossing 1
    sign = np.array([1.0, -1.0])
    dldp = 2.0 * sign[None, :, None] * delta[:, None, :]
    dist = np.empty((n_pairs, 2, 2, 3))
    dist[:, :, 0] = (1.0 - s)[..., None] * dldp
    dist[:, :, 1] = s[..., None] * dldp
    along = np.einsum("ijk,ijk->ij", dldp, e)
    ds_dx0 = (s - 1.0) / safe
    ds_dx1 = -s / safe
    trans = np.empty_like(dist)
    trans[:, :, 0] = (along * ds_dx0)[..., None] * n
    trans[:, :, 1] = (along * ds_dx1)[..., None] * n
    dist[~valid] = 0.0
    trans[~valid] = 0.0
    return CrossingComponents(dist, trans, n, valid)


def ic_gradient(intersections: IntersectionSet, positions, mesh, mode=IcGradientMode.TRANSLATIONAL_ONLY) -> IcGradient:
    """Per-vertex gradient of the contour loss restricted to the selected parts."""
    mode = IcGradientMode.parse(mode)
    x = np.asarray(positions, dtype=np.float64)
    if len(intersections) == 0:
        return IcGradient(np.zeros_like(x), 0)
    comp = crossing_components(intersections, x, mesh.faces)
    if mode is IcGradientMode.TRANSLATIONAL_ONLY:
        g = comp.translational
    elif mode is IcGradientMode.DISTORTIONAL_ONLY:
        g = comp.distortional
    else:
        g = comp.distortional + comp.translational
    idx = intersections.edges.reshape(-1)
    grad = scatter_add(len(x), idx, g.reshape(-1, 3))
    return IcGradient(grad, int((~comp.valid).sum()))


def ic_descent_direction(world_graph, positions, mesh, lambda2: float = 1.0,
                         mode=IcGradientMode.TRANSLATIONAL_ONLY) -> np.ndarray:
    """Displacement field ``-lambda2 * grad`` for the graph's current intersections."""
    return -lambda2 * ic_gradient(world_graph.intersections, positions, mesh, mode).gradient
