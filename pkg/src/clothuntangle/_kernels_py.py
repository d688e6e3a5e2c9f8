"""Vectorized numpy implementations of the geometric hot loops.

Used when the compiled extension is unavailable or disabled through
``CLOTHUNTANGLE_PURE=1``. Every function mirrors the signature and output
convention of its counterpart in ``_kernels.pyx``.
"""
import numpy as np

PARALLEL_TOL = 1e-10
DEDUP_TOL = 1e-12

# edge order within a triangle: (0,1), (1,2), (2,0)
_EDGE_A = np.array([0, 1, 2])
_EDGE_B = np.array([1, 2, 0])


def _overlap(qlo, qhi, lo, hi):
    return np.all((qlo <= hi) & (lo <= qhi), axis=1)


def query_overlaps(node_lo, node_hi, item_lo, item_hi, order, n_leaves, leaf_size, qlo, qhi, upper=0):
    """All ``(query, item)`` pairs whose boxes overlap.

    The tree is an implicit complete binary heap with ``n_leaves`` leaves
    (a power of two); leaf ``j`` owns ``order[j*leaf_size:(j+1)*leaf_size]``.
    Item boxes are indexed by item id. With ``upper`` set only pairs with
    ``item > query`` are kept. Output order is unspecified.
    """
    nq = len(qlo)
    n_items = len(order)
    if nq == 0 or n_items == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    qs = np.arange(nq, dtype=np.int64)
    nodes = np.zeros(nq, dtype=np.int64)
    first_leaf = n_leaves - 1
    while True:
        ov = _overlap(qlo[qs], qhi[qs], node_lo[nodes], node_hi[nodes])
        qs, nodes = qs[ov], nodes[ov]
        if len(qs) == 0:
            return qs, nodes
        if nodes[0] >= first_leaf:
            break
        qs = np.repeat(qs, 2)
        nodes = np.stack([2 * nodes[::1] + 1, 2 * nodes + 2], axis=1).reshape(-1)
    leaf = nodes - first_leaf
    start = leaf * leaf_size
    stop = np.minimum(start + leaf_size, n_items)
    count = np.maximum(stop - start, 0)
    q_rep = np.repeat(qs, count)
    offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    items = order[np.repeat(start, count) + offs]
    if upper:
        keep = items > q_rep
        q_rep, items = q_rep[keep], items[keep]
    ov = _overlap(qlo[q_rep], qhi[q_rep], item_lo[items], item_hi[items])
    return q_rep[ov], items[ov]


def _unit_normals(a, b, c):
    cr = np.cross(b - a, c - a)
    nrm = np.linalg.norm(cr, axis=-1)
    out = np.zeros_like(cr)
    ok = nrm > 0
    out[ok] = cr[ok] / nrm[ok, None]
    return out


def _inside(p, a, b, c, n):
    w0 = np.einsum("ij,ij->i", np.cross(b - a, p - a), n)
    w1 = np.einsum("ij,ij->i", np.cross(c - b, p - b), n)
    w2 = np.einsum("ij,ij->i", np.cross(a - c, p - c), n)
    return (w0 >= 0) & (w1 >= 0) & (w2 >= 0)


def tri_tri_batch(x, faces, fa, fb):
    """Edge-face crossings for candidate face pairs ``(fa[i], fb[i])``.

    Returns
    -------
    ok : (n,) bool
        True where the pair intersects with exactly two distinct crossings.
    edges : (n, 2, 2) int64
        Crossing edges as ``(low, high)`` vertex indices.
    hosts : (n, 2) int64
        Face each edge passes through.
    s : (n, 2) float64
        Relative coordinate of the crossing point along each edge.
    points : (n, 2, 3) float64
    """
    n = len(fa)
    ta, tb = faces[fa], faces[fb]
    shared = np.zeros(n, dtype=bool)
    for i in range(3):
        for j in range(3):
            shared |= ta[:, i] == tb[:, j]

    cand_edges = np.zeros((n, 6, 2), np.int64)
    cand_host = np.zeros((n, 6), np.int64)
    cand_s = np.zeros((n, 6))
    cand_p = np.zeros((n, 6, 3))
    cand_ok = np.zeros((n, 6), bool)

    for side, (te, th, fh) in enumerate(((ta, tb, fb), (tb, ta, fa))):
        ha, hb, hc = x[th[:, 0]], x[th[:, 1]], x[th[:, 2]]
        nrm = _unit_normals(ha, hb, hc)
        for k in range(3):
            col = side * 3 + k
            lo = np.minimum(te[:, _EDGE_A[k]], te[:, _EDGE_B[k]])
            hi = np.maximum(te[:, _EDGE_A[k]], te[:, _EDGE_B[k]])
            x0, x1 = x[lo], x[hi]
            d0 = np.einsum("ij,ij->i", nrm, x0 - ha)
            d1 = np.einsum("ij,ij->i", nrm, x1 - ha)
            straddle = ((d0 < 0) & (d1 > 0)) | ((d0 > 0) & (d1 < 0))
            e = x1 - x0
            den = np.einsum("ij,ij->i", nrm, e)
            elen = np.linalg.norm(e, axis=1)
            good = straddle & (np.abs(den) >= PARALLEL_TOL * elen)
            safe = np.where(good, den, 1.0)
            s = np.einsum("ij,ij->i", nrm, ha - x0) / safe
            p = x0 + s[:, None] * e
            good &= _inside(p, ha, hb, hc, nrm)
            cand_edges[:, col, 0] = lo
            cand_edges[:, col, 1] = hi
            cand_host[:, col] = fh
            cand_s[:, col] = s
            cand_p[:, col] = p
            cand_ok[:, col] = good

    cand_ok &= ~shared[:, None]
    ok = np.zeros(n, bool)
    edges = np.zeros((n, 2, 2), np.int64)
    hosts = np.zeros((n, 2), np.int64)
    s_out = np.zeros((n, 2))
    p_out = np.zeros((n, 2, 3))
    counts = cand_ok.sum(axis=1)
    two = np.nonzero(counts == 2)[0]
    if len(two):
        cols = np.nonzero(cand_ok[two])[1].reshape(-1, 2)
        r2 = two[:, None]
        sep = np.linalg.norm(cand_p[two, cols[:, 0]] - cand_p[two, cols[:, 1]], axis=1)
        good = sep > DEDUP_TOL
        ok[two] = good
        edges[two] = cand_edges[r2, cols]
        hosts[two] = cand_host[r2, cols]
        s_out[two] = cand_s[r2, cols]
        p_out[two] = cand_p[r2, cols]
    for r in np.nonzero(counts > 2)[0]:
        keep = []
        for c in np.nonzero(cand_ok[r])[0]:
            if all(np.linalg.norm(cand_p[r, c] - cand_p[r, k]) > DEDUP_TOL for k in keep):
                keep.append(c)
        if len(keep) != 2:
            continue
        ok[r] = True
        edges[r] = cand_edges[r, keep]
        hosts[r] = cand_host[r, keep]
        s_out[r] = cand_s[r, keep]
        p_out[r] = cand_p[r, keep]
    return ok, edges, hosts, s_out, p_out


def point_face_batch(x, faces, nodes, fids, eps):
    """Signed plane distance and strict-inside projection test.

    Returns ``ok, d, bary`` where ``ok`` requires ``|d| <= eps``, the node not
    being a vertex of the face, and all three barycentrics of the normal
    projection strictly positive.
    """
    tri = faces[fids]
    a, b, c = x[tri[:, 0]], x[tri[:, 1]], x[tri[:, 2]]
    v = x[nodes]
    cr = np.cross(b - a, c - a)
    area2 = np.linalg.norm(cr, axis=1)
    valid = area2 > 0
    n = np.zeros_like(cr)
    n[valid] = cr[valid] / area2[valid, None]
    d = np.einsum("ij,ij->i", v - a, n)
    q = v - d[:, None] * n
    wa = np.einsum("ij,ij->i", np.cross(b - q, c - q), n)
    wb = np.einsum("ij,ij->i", np.cross(c - q, a - q), n)
    wc = np.einsum("ij,ij->i", np.cross(a - q, b - q), n)
    safe = np.where(valid, area2, 1.0)
    bary = np.stack([wa, wb, wc], axis=1) / safe[:, None]
    own = (tri == nodes[:, None]).any(axis=1)
    ok = valid & ~own & (np.abs(d) <= eps) & (bary > 0).all(axis=1)
    return ok, d, bary


def _closest_on_segment(p, a, b):
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / np.where(den > 0, den, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return a + t[:, None] * ab


def point_triangle_batch(p, x, faces, fids):
    """Squared distance and closest point from points ``p[i]`` to faces ``fids[i]``."""
    tri = faces[fids]
    a, b, c = x[tri[:, 0]], x[tri[:, 1]], x[tri[:, 2]]
    n = _unit_normals(a, b, c)
    d = np.einsum("ij,ij->i", p - a, n)
    q = p - d[:, None] * n
    inside = _inside(q, a, b, c, n)
    best = np.where(inside[:, None], q, a)
    best_d2 = np.where(inside, d * d, np.inf)
    for s0, s1 in ((a, b), (b, c), (c, a)):
        cp = _closest_on_segment(p, s0, s1)
        d2 = np.einsum("ij,ij->i", p - cp, p - cp)
        better = d2 < best_d2
        best[better] = cp[better]
        best_d2 = np.where(better, d2, best_d2)
    return best_d2, best
