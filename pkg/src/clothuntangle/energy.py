"""Energy terms of the incremental potential with analytic gradients.

Every term returns ``(value, gradient)`` where ``gradient`` has the shape of
the position array. Quantities documented as frozen (face normals, nearest
body faces, projection barycentrics) are treated as constants when
differentiating.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import BodyContacts, CorrespondenceSet, nearest_body_faces


@dataclass
class MaterialParams:
    stretch_stiffness: float = 100.0
    bend_stiffness: float = 1e-5
    density: float = 0.2
    body_collision_stiffness: float = 1e7
    body_margin: float = 0.004
    friction_coeff: float = 0.3
    friction_stiffness: float = 1.0
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        self.gravity = tuple(float(g) for g in self.gravity)
        if min(self.stretch_stiffness, self.bend_stiffness, self.body_collision_stiffness,
               self.friction_coeff, self.friction_stiffness) < 0:
            raise ValueError("stiffnesses and friction must be non-negative")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.body_margin < 0:
            raise ValueError("body_margin must be non-negative")


@dataclass
class EnergyReport:
    total: float
    per_term: dict[str, float] = field(default_factory=dict)
    gradient: np.ndarray | None = None


def scatter_add(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Sum ``(k, 3)`` rows into an ``(n, 3)`` buffer in index order."""
    out = np.empty((n, 3))
    idx = np.asarray(idx).reshape(-1)
    vals = np.asarray(vals).reshape(-1, 3)
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=vals[:, c], minlength=n)
    return out


def stretching_energy(mesh, positions, params: MaterialParams, rest_lengths=None):
    """Edge springs ``0.5 * k * (|x_i - x_j| - L)^2``."""
    x = np.asarray(positions, dtype=np.float64)
    if rest_lengths is None:
        rest_lengths = mesh.rest_lengths()
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    d = x[j] - x[i]
    length = np.linalg.norm(d, axis=1)
    strain = length - rest_lengths
    k = params.stretch_stiffness
    value = 0.5 * k * float(np.dot(strain, strain))
    safe = np.where(length > 0, length, 1.0)
    coef = np.where(length > 0, k * strain / safe, 0.0)
    f = coef[:, None] * d
    grad = scatter_add(len(x), np.concatenate([j, i]), np.concatenate([f, -f]))
    return value, grad


def _hinge_geometry(x, hinges):
    i, j, k, l = hinges[:, 1], hinges[:, 2], hinges[:, 3], hinges[:, 4]
    xi, xj, xk, xl = x[i], x[j], x[k], x[l]
    e = xj - xi
    na = np.cross(e, xk - xi)
    nb = np.cross(xi - xj, xl - xj)
    return xi, xj, xk, xl, e, na, nb


def dihedral_angles(mesh, positions) -> np.ndarray:
    """Signed bending angle per interior hinge (0 when flat)."""
    x = np.asarray(positions, dtype=np.float64)
    if len(mesh.hinges) == 0:
        return np.zeros(0)
    _, _, _, _, e, na, nb = _hinge_geometry(x, mesh.hinges)
    elen = np.linalg.norm(e, axis=1)
    la = np.linalg.norm(na, axis=1)
    lb = np.linalg.norm(nb, axis=1)
    ok = (la > 0) & (lb > 0) & (elen > 0)
    sa = np.where(ok, la, 1.0)
    sb = np.where(ok, lb, 1.0)
    se = np.where(ok, elen, 1.0)
    ua, ub = na / sa[:, None], nb / sb[:, None]
    sin = np.einsum("ij,ij->i", np.cross(ua, ub), e / se[:, None])
    cos = np.einsum("ij,ij->i", ua, ub)
    return np.where(ok, np.arctan2(sin, cos), 0.0)


def bending_energy(mesh, positions, params: MaterialParams, rest_angles=None):
    """Dihedral springs ``k_b * (theta - theta_rest)^2`` over interior edges."""
    x = np.asarray(positions, dtype=np.float64)
    h = mesh.hinges
    if len(h) == 0:
        return 0.0, np.zeros_like(x)
    if rest_angles is None:
        rest_angles = dihedral_angles(mesh, mesh.positions)
    theta = dihedral_angles(mesh, x)
    dtheta = theta - rest_angles
    kb = params.bend_stiffness
    value = kb * float(np.dot(dtheta, dtheta))

    xi, xj, xk, xl, e, na, nb = _hinge_geometry(x, h)
    elen = np.linalg.norm(e, axis=1)
    la2 = np.einsum("ij,ij->i", na, na)
    lb2 = np.einsum("ij,ij->i", nb, nb)
    ok = (la2 > 1e-24) & (lb2 > 1e-24) & (elen > 1e-12)
    se = np.where(ok, elen, 1.0)
    wa = np.where(ok, 1.0 / np.where(ok, la2, 1.0), 0.0)[:, None] * na
    wb = np.where(ok, 1.0 / np.where(ok, lb2, 1.0), 0.0)[:, None] * nb
    ehat = e / se[:, None]
    gk = -se[:, None] * wa
    gl = -se[:, None] * wb
    gi = -(np.einsum("ij,ij->i", xk - xj, ehat)[:, None] * wa
           + np.einsum("ij,ij->i", xl - xj, ehat)[:, None] * wb)
    gj = (np.einsum("ij,ij->i", xk - xi, ehat)[:, None] * wa
          + np.einsum("ij,ij->i", xl - xi, ehat)[:, None] * wb)
    coef = (2.0 * kb * dtheta)[:, None]
    idx = np.concatenate([h[:, 1], h[:, 2], h[:, 3], h[:, 4]])
    vals = np.concatenate([coef * gi, coef * gj, coef * gk, coef * gl])
    return value, scatter_add(len(x), idx, vals)


def inertia_energy(mass, positions, prev_positions, velocities, dt: float):
    """``sum m/(2 dt^2) |x - (x_prev + dt v)|^2``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(positions, dtype=np.float64)
    pred = np.asarray(prev_positions) + dt * np.asarray(velocities)
    r = x - pred
    w = mass / (dt * dt)
    value = 0.5 * float(np.sum(w * np.einsum("ij,ij->i", r, r)))
    return value, w[:, None] * r


def gravity_energy(mass, positions, gravity):
    g = np.asarray(gravity, dtype=np.float64)
    x = np.asarray(positions, dtype=np.float64)
    value = -float(np.sum(mass * (x @ g)))
    return value, -mass[:, None] * g[None, :]


def gravity_inertia_energy(mesh, positions, prev_positions, velocities, dt, params: MaterialParams, mass=None):
    """Inertia plus gravitational potential; its minimizer is the implicit Euler step."""
    m = mesh.vertex_mass if mass is None else mass
    vi, gi = inertia_energy(m, positions, prev_positions, velocities, dt)
    vg, gg = gravity_energy(m, positions, params.gravity)
    return vi + vg, gi + gg


def body_collision_energy(garment_positions, body_mesh, body_positions, params: MaterialParams,
                          contacts: BodyContacts | None = None, bvh=None, radius: float = 0.03):
    """Cubic penalty ``k * max(margin - d, 0)^3`` against the nearest body face plane."""
    x = np.asarray(garment_positions, dtype=np.float64)
    if contacts is None:
        contacts = nearest_body_faces(x, body_mesh, body_positions, bvh, radius)
    if len(contacts) == 0:
        return 0.0, np.zeros_like(x)
    d = np.einsum("ij,ij->i", x[contacts.nodes] - contacts.anchor, contacts.normals)
    pen = np.maximum(params.body_margin - d, 0.0)
    k = params.body_collision_stiffness
    value = k * float(np.sum(pen ** 3))
    g = (-3.0 * k * pen * pen)[:, None] * contacts.normals
    return value, scatter_add(len(x), contacts.nodes, g)


def repulsion_frame(corr: CorrespondenceSet, positions, faces):
    """Current unit normals and projection barycentrics for each correspondence."""
    x = np.asarray(positions, dtype=np.float64)
    tri = faces[corr.face]
    a, b, c = x[tri[:, 0]], x[tri[:, 1]], x[tri[:, 2]]
    cr = np.cross(b - a, c - a)
    area2 = np.linalg.norm(cr, axis=1)
    safe = np.where(area2 > 0, area2, 1.0)
    n = cr / safe[:, None]
    v = x[corr.node]
    d = np.einsum("ij,ij->i", v - a, n)
    q = v - d[:, None] * n
    wa = np.einsum("ij,ij->i", np.cross(b - q, c - q), n)
    wb = np.einsum("ij,ij->i", np.cross(c - q, a - q), n)
    bary = np.stack([wa, wb, area2 - wa - wb], axis=1) / safe[:, None]
    return n, bary


def repulsion_energy(corr: CorrespondenceSet, positions, faces, xi: float = 0.001, frozen=None):
    """``sum max(xi - d_curr * sign(d_prev), 0)^3`` with ``d = (v - f) . n``.

    ``frozen`` optionally supplies ``(normals, bary)``; by default they are
    taken from ``positions`` and held constant for the gradient.
    """
    x = np.asarray(positions, dtype=np.float64)
    if len(corr) == 0:
        return 0.0, np.zeros_like(x)
    n, bary = repulsion_frame(corr, x, faces) if frozen is None else frozen
    tri = faces[corr.face]
    foot = np.einsum("ij,ijk->ik", bary, x[tri])
    d = np.einsum("ij,ij->i", x[corr.node] - foot, n)
    sgn = np.where(corr.d_prev < 0, -1.0, 1.0)
    pen = np.maximum(xi - d * sgn, 0.0)
    value = float(np.sum(pen ** 3))
    dd = (-3.0 * pen * pen * sgn)[:, None] * n
    idx = np.concatenate([corr.node, tri[:, 0], tri[:, 1], tri[:, 2]])
    vals = np.concatenate([dd, -bary[:, 0:1] * dd, -bary[:, 1:2] * dd, -bary[:, 2:3] * dd])
    return value, scatter_add(len(x), idx, vals)


def repulsion_curvature(corr: CorrespondenceSet, positions, faces, xi: float = 0.001):
    """Per-vertex scalar second derivative estimate of the repulsion penalty."""
    x = np.asarray(positions, dtype=np.float64)
    diag = np.zeros(len(x))
    if len(corr) == 0:
        return diag
    n, bary = repulsion_frame(corr, x, faces)
    tri = faces[corr.face]
    foot = np.einsum("ij,ijk->ik", bary, x[tri])
    d = np.einsum("ij,ij->i", x[corr.node] - foot, n)
    sgn = np.where(corr.d_prev < 0, -1.0, 1.0)
    h = 6.0 * np.maximum(xi - d * sgn, 0.0)
    diag += np.bincount(corr.node, weights=h, minlength=len(x))
    for k in range(3):
        diag += np.bincount(tri[:, k], weights=h * bary[:, k] ** 2, minlength=len(x))
    return diag


@dataclass
class FrictionContacts:
    """Frozen contact set for the friction penalty.

    Cloth rows carry a node, a face and projection barycentrics; body rows a
    node and the displacement of the touched body point over the step.
    """

    cloth_node: np.ndarray
    cloth_face: np.ndarray
    cloth_bary: np.ndarray
    cloth_normal: np.ndarray
    body_node: np.ndarray
    body_motion: np.ndarray
    body_normal: np.ndarray

    @classmethod
    def empty(cls):
        z = np.zeros(0, np.int64)
        return cls(z, z, np.zeros((0, 3)), np.zeros((0, 3)), z, np.zeros((0, 3)), np.zeros((0, 3)))

    def __len__(self):
        return len(self.cloth_node) + len(self.body_node)


def _bary_on_face(p, a, b, c):
    v0, v1, v2 = b - a, c - a, p - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    den = np.where(den != 0, den, 1.0)
    w1 = (d11 * d20 - d01 * d21) / den
    w2 = (d00 * d21 - d01 * d20) / den
    return np.stack([1.0 - w1 - w2, w1, w2], axis=1)


def friction_contacts(corr: CorrespondenceSet, positions, faces, xi, body_contacts: BodyContacts | None,
                      body_mesh, body_positions, body_prev_positions, body_margin) -> FrictionContacts:
    """Active contacts: cloth pairs within ``2 xi`` and body nodes within ``2 margin``."""
    x = np.asarray(positions, dtype=np.float64)
    out = FrictionContacts.empty()
    if len(corr):
        n, bary = repulsion_frame(corr, x, faces)
        sgn = np.where(corr.d_prev < 0, -1.0, 1.0)
        tri = faces[corr.face]
        foot = np.einsum("ij,ijk->ik", bary, x[tri])
        d = np.einsum("ij,ij->i", x[corr.node] - foot, n) * sgn
        act = d < 2.0 * xi
        out.cloth_node, out.cloth_face = corr.node[act], corr.face[act]
        out.cloth_bary, out.cloth_normal = bary[act], n[act]
    if body_contacts is not None and len(body_contacts) and body_prev_positions is not None:
        d = np.einsum("ij,ij->i", x[body_contacts.nodes] - body_contacts.anchor, body_contacts.normals)
        act = d < 2.0 * body_margin
        tri = body_mesh.faces[body_contacts.faces[act]]
        xb, xbp = np.asarray(body_positions), np.asarray(body_prev_positions)
        w = _bary_on_face(body_contacts.closest[act], xb[tri[:, 0]], xb[tri[:, 1]], xb[tri[:, 2]])
        motion = np.einsum("ij,ijk->ik", w, xb[tri] - xbp[tri])
        out.body_node, out.body_motion = body_contacts.nodes[act], motion
        out.body_normal = body_contacts.normals[act]
    return out


def friction_energy(contacts: FrictionContacts, positions, prev_positions, faces, params: MaterialParams):
    """Quadratic penalty ``0.5 * mu * k_f * |tangential slip|^2`` over one step."""
    x = np.asarray(positions, dtype=np.float64)
    if len(contacts) == 0 or params.friction_coeff == 0:
        return 0.0, np.zeros_like(x)
    dx = x - np.asarray(prev_positions)
    c = params.friction_coeff * params.friction_stiffness
    value = 0.0
    idx, vals = [], []
    if len(contacts.cloth_node):
        tri = faces[contacts.cloth_face]
        slip = dx[contacts.cloth_node] - np.einsum("ij,ijk->ik", contacts.cloth_bary, dx[tri])
        n = contacts.cloth_normal
        t = slip - np.einsum("ij,ij->i", slip, n)[:, None] * n
        value += 0.5 * c * float(np.sum(t * t))
        g = c * t
        idx += [contacts.cloth_node, tri[:, 0], tri[:, 1], tri[:, 2]]
        vals += [g] + [-contacts.cloth_bary[:, k:k + 1] * g for k in range(3)]
    if len(contacts.body_node):
        slip = dx[contacts.body_node] - contacts.body_motion
        n = contacts.body_normal
        t = slip - np.einsum("ij,ij->i", slip, n)[:, None] * n
        value += 0.5 * c * float(np.sum(t * t))
        idx.append(contacts.body_node)
        vals.append(c * t)
    return value, scatter_add(len(x), np.concatenate(idx), np.concatenate(vals))
