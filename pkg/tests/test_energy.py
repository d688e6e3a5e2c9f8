"""Analytic energy gradients against central finite differences.

Contact sets, repulsion frames and friction contacts are built once and held
fixed, so each term is a smooth function of the positions being perturbed.
"""
import numpy as np
import pytest

from clothuntangle.collision import BodyContacts, CorrespondenceSet
from clothuntangle.energy import (FrictionContacts, MaterialParams, bending_energy, body_collision_energy,
                                  dihedral_angles, friction_energy, gravity_energy, gravity_inertia_energy,
                                  inertia_energy, repulsion_energy, repulsion_frame, scatter_add,
                                  stretching_energy)
from clothuntangle.mesh import build_topology
from clothuntangle.scenes import grid_sheet

from conftest import contact_scene, energy_sheet, random_material
from oracles import central_difference, relative_error

N_CONFIGS = 100
TOL = 1e-6
H = 1e-6


def _check(f, grad, x, h=H, tol=TOL):
    fd = central_difference(lambda y: f(y)[0], x, h)
    assert relative_error(grad, fd) < tol


@pytest.mark.parametrize("seed", range(N_CONFIGS))
def test_internal_and_inertial_terms(seed):
    rng = np.random.default_rng(seed)
    mesh, x = energy_sheet(rng)
    p = random_material(rng)
    _check(lambda y: stretching_energy(mesh, y, p), stretching_energy(mesh, x, p)[1], x)
    _check(lambda y: bending_energy(mesh, y, p), bending_energy(mesh, x, p)[1], x)
    prev = x + rng.normal(0, 0.01, x.shape)
    v = rng.normal(0, 0.3, x.shape)
    dt = rng.uniform(1 / 120, 1 / 24)
    _check(lambda y: inertia_energy(mesh.vertex_mass, y, prev, v, dt), inertia_energy(mesh.vertex_mass, x, prev, v, dt)[1], x)
    _check(lambda y: gravity_energy(mesh.vertex_mass, y, p.gravity), gravity_energy(mesh.vertex_mass, x, p.gravity)[1], x)


@pytest.mark.parametrize("seed", range(N_CONFIGS))
def test_contact_terms_with_frozen_sets(seed):
    rng = np.random.default_rng(10_000 + seed)
    p = random_material(rng)
    x, n, d = contact_scene(rng)
    faces = np.array([[0, 1, 2]])
    k = len(x) - 3
    nodes = np.arange(3, 3 + k)
    xi = 1e-3 * rng.uniform(1, 3)
    d_prev = np.where(rng.uniform(size=k) < 0.5, -1.0, 1.0) * 1e-3
    corr = CorrespondenceSet(nodes, np.zeros(k, np.int64), d, d_prev, np.full((k, 3), 1 / 3))
    frame = repulsion_frame(corr, x, faces)
    _check(lambda y: repulsion_energy(corr, y, faces, xi, frame), repulsion_energy(corr, x, faces, xi, frame)[1], x)

    # body plane through the face, frozen
    contacts = BodyContacts(nodes, np.zeros(k, np.int64), x[nodes] - d[:, None] * n, np.tile(n, (k, 1)),
                            np.tile(x[0], (k, 1)))
    _check(lambda y: body_collision_energy(y, None, None, p, contacts),
           body_collision_energy(x, None, None, p, contacts)[1], x)

    fc = FrictionContacts(nodes, np.zeros(k, np.int64), frame[1], frame[0], nodes[:2],
                          rng.normal(0, 1e-3, (2, 3)), np.tile(n, (2, 1)))
    prev = x + rng.normal(0, 1e-3, x.shape)
    _check(lambda y: friction_energy(fc, y, prev, faces, p), friction_energy(fc, x, prev, faces, p)[1], x)


def test_repulsion_zero_outside_barrier():
    x = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.2, 0.01]])
    faces = np.array([[0, 1, 2]])
    corr = CorrespondenceSet([3], [0], [0.01], [0.01], [[0.6, 0.2, 0.2]])
    v, g = repulsion_energy(corr, x, faces, xi=1e-3)
    assert v == 0 and not g.any()
    x[3, 2] = 5e-4
    v, g = repulsion_energy(corr, x, faces, xi=1e-3)
    assert v == pytest.approx((5e-4) ** 3)
    # the node is pushed up, the face down, with zero net force
    assert g[3, 2] < 0 and g[:3, 2].sum() > 0
    np.testing.assert_allclose(g.sum(axis=0), 0, atol=1e-18)


def test_rigid_motion_leaves_internal_energy_unchanged(rng):
    mesh, x = energy_sheet(rng)
    p = MaterialParams()
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    y = x @ q.T + rng.normal(size=3)
    assert stretching_energy(mesh, y, p)[0] == pytest.approx(stretching_energy(mesh, x, p)[0], rel=1e-10)
    np.testing.assert_allclose(dihedral_angles(mesh, y) * np.sign(np.linalg.det(q)), dihedral_angles(mesh, x),
                               atol=1e-10)
    np.testing.assert_allclose(stretching_energy(mesh, x, p)[1].sum(axis=0), 0, atol=1e-9)


def test_rest_state_has_zero_internal_energy():
    x, f = grid_sheet(4, 4, 1.0, 1.0)
    mesh = build_topology(x, f)
    assert stretching_energy(mesh, x, MaterialParams())[0] == 0
    assert bending_energy(mesh, x, MaterialParams())[0] == 0


def test_inertia_gravity_minimizer_is_ballistic_step(rng):
    mesh, x = energy_sheet(rng)
    p = MaterialParams()
    v = rng.normal(size=x.shape)
    dt = 1 / 30
    target = x + dt * v + dt * dt * np.asarray(p.gravity)
    _, g = gravity_inertia_energy(mesh, target, x, v, dt, p)
    np.testing.assert_allclose(g, 0, atol=1e-10)


def test_scatter_add_matches_add_at(rng):
    idx = rng.integers(0, 7, 50)
    vals = rng.normal(size=(50, 3))
    expect = np.zeros((7, 3))
    np.add.at(expect, idx, vals)
    np.testing.assert_allclose(scatter_add(7, idx, vals), expect, atol=1e-14)


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialParams(density=0)
    with pytest.raises(ValueError):
        MaterialParams(stretch_stiffness=-1)
    with pytest.raises(ValueError):
        inertia_energy(np.ones(1), np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)), 0.0)
