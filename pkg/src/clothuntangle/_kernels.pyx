# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled geometric kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libcpp.vector cimport vector
from cython.parallel cimport prange

cnp.import_array()

cdef double PARALLEL_TOL = 1e-10
cdef double DEDUP_TOL = 1e-12
cdef int EDGE_A[3]
cdef int EDGE_B[3]
EDGE_A[:] = [0, 1, 2]
EDGE_B[:] = [1, 2, 0]


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void sub3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[0] - b[0]
    out[1] = a[1] - b[1]
    out[2] = a[2] - b[2]


cdef inline void cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline bint unit_normal(const double* a, const double* b, const double* c, double* n) noexcept nogil:
    cdef double e1[3]
    cdef double e2[3]
    cdef double nrm
    sub3(b, a, e1)
    sub3(c, a, e2)
    cross3(e1, e2, n)
    nrm = sqrt(dot3(n, n))
    if nrm > 0:
        n[0] /= nrm
        n[1] /= nrm
        n[2] /= nrm
        return 1
    n[0] = 0
    n[1] = 0
    n[2] = 0
    return 0


cdef inline double edge_fn(const double* p, const double* a, const double* b, const double* n) noexcept nogil:
    cdef double ab[3]
    cdef double ap[3]
    cdef double cr[3]
    sub3(b, a, ab)
    sub3(p, a, ap)
    cross3(ab, ap, cr)
    return dot3(cr, n)


cdef inline bint inside(const double* p, const double* a, const double* b, const double* c, const double* n) noexcept nogil:
    return edge_fn(p, a, b, n) >= 0 and edge_fn(p, b, c, n) >= 0 and edge_fn(p, c, a, n) >= 0


def query_overlaps(double[:, ::1] node_lo, double[:, ::1] node_hi,
                   double[:, ::1] item_lo, double[:, ::1] item_hi,
                   long[::1] order, long n_leaves, long leaf_size,
                   double[:, ::1] qlo, double[:, ::1] qhi, int upper=0):
    cdef long nq = qlo.shape[0]
    cdef long n_items = order.shape[0]
    cdef long first_leaf = n_leaves - 1
    cdef vector[long] out_q
    cdef vector[long] out_i
    cdef vector[long] stack
    cdef long q, node, leaf, start, stop, k, it
    cdef int ax
    cdef bint hit
    if nq == 0 or n_items == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    with nogil:
        for q in range(nq):
            stack.clear()
            stack.push_back(0)
            while stack.size() > 0:
                node = stack.back()
                stack.pop_back()
                hit = 1
                for ax in range(3):
                    if qlo[q, ax] > node_hi[node, ax] or node_lo[node, ax] > qhi[q, ax]:
                        hit = 0
                        break
                if not hit:
                    continue
                if node >= first_leaf:
                    leaf = node - first_leaf
                    start = leaf * leaf_size
                    stop = start + leaf_size
                    if stop > n_items:
                        stop = n_items
                    for k in range(start, stop):
                        it = order[k]
                        if upper and it <= q:
                            continue
                        hit = 1
                        for ax in range(3):
                            if qlo[q, ax] > item_hi[it, ax] or item_lo[it, ax] > qhi[q, ax]:
                                hit = 0
                                break
                        if hit:
                            out_q.push_back(q)
                            out_i.push_back(it)
                else:
                    stack.push_back(2 * node + 2)
                    stack.push_back(2 * node + 1)
    qa = np.empty(out_q.size(), np.int64)
    ia = np.empty(out_i.size(), np.int64)
    cdef long[::1] qv = qa
    cdef long[::1] iv = ia
    for k in range(<long>out_q.size()):
        qv[k] = out_q[k]
        iv[k] = out_i[k]
    return qa, ia


cdef void tri_tri_one(const double[:, ::1] x, const long[:, ::1] faces, long fa, long fb,
                      unsigned char* ok, long* edges, long* hosts, double* s_out, double* p_out) noexcept nogil:
    cdef long ta[3]
    cdef long tb[3]
    cdef long* te
    cdef long* th
    cdef long fh, lo, hi
    cdef double n[3]
    cdef double e[3]
    cdef double tmp[3]
    cdef double p[3]
    cdef double ce[6][2]
    cdef long ce_lo[6]
    cdef long ce_hi[6]
    cdef long ch[6]
    cdef double cs[6]
    cdef double cp[6][3]
    cdef int count = 0, keep = 0
    cdef int kept[2]
    cdef int side, k, i, j, m
    cdef double d0, d1, den, elen, s, sep
    cdef bint dup
    ok[0] = 0
    for i in range(3):
        ta[i] = faces[fa, i]
        tb[i] = faces[fb, i]
    for i in range(3):
        for j in range(3):
            if ta[i] == tb[j]:
                return
    for side in range(2):
        if side == 0:
            te = ta
            th = tb
            fh = fb
        else:
            te = tb
            th = ta
            fh = fa
        unit_normal(&x[th[0], 0], &x[th[1], 0], &x[th[2], 0], n)
        for k in range(3):
            lo = te[EDGE_A[k]]
            hi = te[EDGE_B[k]]
            if lo > hi:
                lo, hi = hi, lo
            sub3(&x[lo, 0], &x[th[0], 0], tmp)
            d0 = dot3(n, tmp)
            sub3(&x[hi, 0], &x[th[0], 0], tmp)
            d1 = dot3(n, tmp)
            if not ((d0 < 0 and d1 > 0) or (d0 > 0 and d1 < 0)):
                continue
            sub3(&x[hi, 0], &x[lo, 0], e)
            den = dot3(n, e)
            elen = sqrt(dot3(e, e))
            if fabs(den) < PARALLEL_TOL * elen:
                continue
            sub3(&x[th[0], 0], &x[lo, 0], tmp)
            s = dot3(n, tmp) / den
            p[0] = x[lo, 0] + s * e[0]
            p[1] = x[lo, 1] + s * e[1]
            p[2] = x[lo, 2] + s * e[2]
            if not inside(p, &x[th[0], 0], &x[th[1], 0], &x[th[2], 0], n):
                continue
            ce_lo[count] = lo
            ce_hi[count] = hi
            ch[count] = fh
            cs[count] = s
            cp[count][0] = p[0]
            cp[count][1] = p[1]
            cp[count][2] = p[2]
            count += 1
    if count < 2:
        return
    for i in range(count):
        dup = 0
        for m in range(keep):
            j = kept[m]
            sub3(cp[i], cp[j], tmp)
            sep = sqrt(dot3(tmp, tmp))
            if sep <= DEDUP_TOL:
                dup = 1
                break
        if dup:
            continue
        if keep == 2:
            return
        kept[keep] = i
        keep += 1
    if keep != 2:
        return
    ok[0] = 1
    for m in range(2):
        i = kept[m]
        edges[2 * m] = ce_lo[i]
        edges[2 * m + 1] = ce_hi[i]
        hosts[m] = ch[i]
        s_out[m] = cs[i]
        p_out[3 * m] = cp[i][0]
        p_out[3 * m + 1] = cp[i][1]
        p_out[3 * m + 2] = cp[i][2]


def tri_tri_batch(double[:, ::1] x, long[:, ::1] faces, long[::1] fa, long[::1] fb, int threads=1):
    cdef long n = fa.shape[0]
    ok = np.zeros(n, np.uint8)
    edges = np.zeros((n, 2, 2), np.int64)
    hosts = np.zeros((n, 2), np.int64)
    s = np.zeros((n, 2))
    pts = np.zeros((n, 2, 3))
    cdef unsigned char[::1] okv = ok
    cdef long[:, :, ::1] ev = edges
    cdef long[:, ::1] hv = hosts
    cdef double[:, ::1] sv = s
    cdef double[:, :, ::1] pv = pts
    cdef long i
    if n == 0:
        return ok.astype(bool), edges, hosts, s, pts
    for i in prange(n, nogil=True, num_threads=threads, schedule="static"):
        tri_tri_one(x, faces, fa[i], fb[i], &okv[i], &ev[i, 0, 0], &hv[i, 0], &sv[i, 0], &pv[i, 0, 0])
    return ok.astype(bool), edges, hosts, s, pts


def point_face_batch(double[:, ::1] x, long[:, ::1] faces, long[::1] nodes, long[::1] fids, double eps, int threads=1):
    cdef long n = nodes.shape[0]
    ok = np.zeros(n, np.uint8)
    d_out = np.zeros(n)
    bary = np.zeros((n, 3))
    cdef unsigned char[::1] okv = ok
    cdef double[::1] dv = d_out
    cdef double[:, ::1] bv = bary
    cdef long i
    if n == 0:
        return ok.astype(bool), d_out, bary
    for i in prange(n, nogil=True, num_threads=threads, schedule="static"):
        point_face_one(x, faces, nodes[i], fids[i], eps, &okv[i], &dv[i], &bv[i, 0])
    return ok.astype(bool), d_out, bary


cdef void point_face_one(const double[:, ::1] x, const long[:, ::1] faces, long node, long f, double eps,
                         unsigned char* ok, double* d_out, double* bary) noexcept nogil:
    cdef long ia = faces[f, 0], ib = faces[f, 1], ic = faces[f, 2]
    cdef const double* a = &x[ia, 0]
    cdef const double* b = &x[ib, 0]
    cdef const double* c = &x[ic, 0]
    cdef const double* v = &x[node, 0]
    cdef double e1[3]
    cdef double e2[3]
    cdef double n[3]
    cdef double q[3]
    cdef double t1[3]
    cdef double t2[3]
    cdef double cr[3]
    cdef double area2, d, wa, wb, wc
    cdef int k
    ok[0] = 0
    sub3(b, a, e1)
    sub3(c, a, e2)
    cross3(e1, e2, n)
    area2 = sqrt(dot3(n, n))
    if area2 <= 0:
        return
    for k in range(3):
        n[k] = n[k] / area2
    sub3(v, a, t1)
    d = dot3(t1, n)
    for k in range(3):
        q[k] = v[k] - d * n[k]
    sub3(b, q, t1)
    sub3(c, q, t2)
    cross3(t1, t2, cr)
    wa = dot3(cr, n) / area2
    sub3(c, q, t1)
    sub3(a, q, t2)
    cross3(t1, t2, cr)
    wb = dot3(cr, n) / area2
    sub3(a, q, t1)
    sub3(b, q, t2)
    cross3(t1, t2, cr)
    wc = dot3(cr, n) / area2
    d_out[0] = d
    bary[0] = wa
    bary[1] = wb
    bary[2] = wc
    if node == ia or node == ib or node == ic:
        return
    if fabs(d) <= eps and wa > 0 and wb > 0 and wc > 0:
        ok[0] = 1


cdef inline void closest_on_segment(const double* p, const double* a, const double* b, double* out) noexcept nogil:
    cdef double ab[3]
    cdef double ap[3]
    cdef double den, t
    sub3(b, a, ab)
    sub3(p, a, ap)
    den = dot3(ab, ab)
    if den > 0:
        t = dot3(ap, ab) / den
    else:
        t = dot3(ap, ab)
    if t < 0:
        t = 0
    elif t > 1:
        t = 1
    out[0] = a[0] + t * ab[0]
    out[1] = a[1] + t * ab[1]
    out[2] = a[2] + t * ab[2]


def point_triangle_batch(double[:, ::1] p, double[:, ::1] x, long[:, ::1] faces, long[::1] fids):
    cdef long n = fids.shape[0]
    d2_out = np.zeros(n)
    best_out = np.zeros((n, 3))
    cdef double[::1] dv = d2_out
    cdef double[:, ::1] bv = best_out
    cdef long i
    cdef int k, m
    cdef const double* a
    cdef const double* b
    cdef const double* c
    cdef const double* pt
    cdef double nrm[3]
    cdef double q[3]
    cdef double cp[3]
    cdef double tmp[3]
    cdef double d, d2, best_d2
    with nogil:
        for i in range(n):
            a = &x[faces[fids[i], 0], 0]
            b = &x[faces[fids[i], 1], 0]
            c = &x[faces[fids[i], 2], 0]
            pt = &p[i, 0]
            unit_normal(a, b, c, nrm)
            sub3(pt, a, tmp)
            d = dot3(tmp, nrm)
            for k in range(3):
                q[k] = pt[k] - d * nrm[k]
            if inside(q, a, b, c, nrm):
                best_d2 = d * d
                for k in range(3):
                    bv[i, k] = q[k]
            else:
                best_d2 = 1e300
                for k in range(3):
                    bv[i, k] = a[k]
            for m in range(3):
                if m == 0:
                    closest_on_segment(pt, a, b, cp)
                elif m == 1:
                    closest_on_segment(pt, b, c, cp)
                else:
                    closest_on_segment(pt, c, a, cp)
                sub3(pt, cp, tmp)
                d2 = dot3(tmp, tmp)
                if d2 < best_d2:
                    best_d2 = d2
                    for k in range(3):
                        bv[i, k] = cp[k]
            dv[i] = best_d2
    return d2_out, best_out
