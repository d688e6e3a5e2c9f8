"""Bounding volume hierarchy over axis-aligned boxes.

The tree is an implicit complete binary heap over items sorted by the Morton
code of their box centers: leaf ``j`` owns a contiguous run of ``leaf_size``
sorted items and node ``i`` has children ``2i+1`` and ``2i+2``. Building is a
sort plus one vectorized reduction per level, and refitting reuses the order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class EmptyMesh(ValueError):
    pass


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def contains(self, other: "Aabb") -> bool:
        return bool(np.all(self.min <= other.min) and np.all(other.max <= self.max))


@dataclass(eq=False)
class BvhTree:
    node_lo: np.ndarray
    node_hi: np.ndarray
    item_lo: np.ndarray
    item_hi: np.ndarray
    order: np.ndarray
    n_leaves: int
    leaf_size: int
    margin: float

    @property
    def n_items(self) -> int:
        return len(self.order)

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)

    def node(self, i: int) -> Aabb:
        return Aabb(self.node_lo[i], self.node_hi[i])

    def leaf_items(self, j: int) -> np.ndarray:
        return self.order[j * self.leaf_size:(j + 1) * self.leaf_size]

    def query(self, qlo, qhi, upper: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Overlapping ``(query, item)`` pairs, sorted lexicographically.

        With ``upper`` only pairs with ``item > query`` are returned.
        """
        qlo = np.ascontiguousarray(qlo, dtype=np.float64).reshape(-1, 3)
        qhi = np.ascontiguousarray(qhi, dtype=np.float64).reshape(-1, 3)
        q, it = kernels.query_overlaps(
            self.node_lo, self.node_hi, self.item_lo, self.item_hi,
            self.order, self.n_leaves, self.leaf_size, qlo, qhi, int(upper),
        )
        q = np.asarray(q, dtype=np.int64)
        it = np.asarray(it, dtype=np.int64)
        key = np.argsort(q * len(self.order) + it, kind="stable")
        return q[key], it[key]

    def self_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Overlapping item pairs ``(i, j)`` with ``i < j``."""
        return self.query(self.item_lo, self.item_hi, upper=True)


def _morton3(cells: np.ndarray) -> np.ndarray:
    def spread(v):
        v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
        v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
        v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
        v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
        v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
        v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
        return v

    return spread(cells[:, 0]) | (spread(cells[:, 1]) << np.uint64(1)) | (spread(cells[:, 2]) << np.uint64(2))


def _reduce_levels(item_lo, item_hi, order, n_leaves, leaf_size):
    n = len(order)
    total = 2 * n_leaves - 1
    node_lo = np.full((total, 3), np.inf)
    node_hi = np.full((total, 3), -np.inf)
    starts = np.arange(0, n, leaf_size)
    slo = item_lo[order]
    shi = item_hi[order]
    first = n_leaves - 1
    node_lo[first:first + len(starts)] = np.minimum.reduceat(slo, starts, axis=0)
    node_hi[first:first + len(starts)] = np.maximum.reduceat(shi, starts, axis=0)
    width = n_leaves
    while width > 1:
        first_child = width - 1
        parents = np.arange(width // 2) + (width // 2 - 1)
        left = first_child + 2 * np.arange(width // 2)
        node_lo[parents] = np.minimum(node_lo[left], node_lo[left + 1])
        node_hi[parents] = np.maximum(node_hi[left], node_hi[left + 1])
        width //= 2
    return node_lo, node_hi


def build_from_boxes(lo, hi, leaf_size: int = 4, margin: float = 0.0) -> BvhTree:
    """Build a tree over arbitrary item boxes, inflating each by ``margin``."""
    lo = np.asarray(lo, dtype=np.float64).reshape(-1, 3)
    hi = np.asarray(hi, dtype=np.float64).reshape(-1, 3)
    n = len(lo)
    if n == 0:
        raise EmptyMesh("cannot build a BVH over zero items")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("non-finite item boxes")
    item_lo = np.ascontiguousarray(lo - margin)
    item_hi = np.ascontiguousarray(hi + margin)
    center = 0.5 * (item_lo + item_hi)
    cmin = center.min(axis=0)
    ext = np.maximum(center.max(axis=0) - cmin, 1e-300)
    cells = np.clip(((center - cmin) / ext * 1023.0).astype(np.int64), 0, 1023)
    codes = _morton3(cells)
    order = np.argsort(codes, kind="stable").astype(np.int64)
    n_leaf_needed = -(-n // leaf_size)
    n_leaves = 1 << max(0, int(np.ceil(np.log2(n_leaf_needed))))
    node_lo, node_hi = _reduce_levels(item_lo, item_hi, order, n_leaves, leaf_size)
    return BvhTree(node_lo, node_hi, item_lo, item_hi, order, n_leaves, leaf_size, float(margin))


def face_boxes(x: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tri = x[faces]
    return tri.min(axis=1), tri.max(axis=1)


def build_bvh(mesh, positions, margin: float = 0.0, leaf_size: int = 4) -> BvhTree:
    """Face BVH of ``mesh`` at ``positions`` with boxes inflated by ``margin``."""
    x = np.asarray(positions, dtype=np.float64)
    if mesh.n_faces == 0:
        raise EmptyMesh("mesh has no faces")
    lo, hi = face_boxes(x, mesh.faces)
    return build_from_boxes(lo, hi, leaf_size=leaf_size, margin=margin)


def build_point_bvh(points, leaf_size: int = 4) -> BvhTree:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return build_from_boxes(p, p, leaf_size=leaf_size)


def refit(tree: BvhTree, lo, hi) -> BvhTree:
    """Update boxes for moved items, keeping the item order."""
    lo = np.asarray(lo, dtype=np.float64).reshape(-1, 3)
    hi = np.asarray(hi, dtype=np.float64).reshape(-1, 3)
    item_lo = np.ascontiguousarray(lo - tree.margin)
    item_hi = np.ascontiguousarray(hi + tree.margin)
    node_lo, node_hi = _reduce_levels(item_lo, item_hi, tree.order, tree.n_leaves, tree.leaf_size)
    return BvhTree(node_lo, node_hi, item_lo, item_hi, tree.order, tree.n_leaves, tree.leaf_size, tree.margin)


def refit_mesh(tree: BvhTree, mesh, positions) -> BvhTree:
    lo, hi = face_boxes(np.asarray(positions, dtype=np.float64), mesh.faces)
    return refit(tree, lo, hi)
