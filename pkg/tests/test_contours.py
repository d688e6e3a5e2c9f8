import numpy as np
import pytest

from clothuntangle.collision import detect_intersections, find_cloth_correspondences
from clothuntangle.contours import (classify_correspondences, classify_nodes, contour_polyline, make_contours,
                                    remove_nested, split_by_closed_contour, SplitFailed)
from clothuntangle.graph import GraphConfig, build_input_graph
from clothuntangle.mesh import build_topology
from clothuntangle.scenes import SceneRecipe, generate, grid_sheet, sphere_through_sheet

from conftest import plus_crossing, slot_crossing
from oracles import oracle_classification


def _classify(mesh, x):
    inter = detect_intersections(mesh, x)
    contours = make_contours(inter, mesh)
    kept = remove_nested(contours)
    return inter, contours, kept, classify_nodes(kept, mesh)


SCENES = {
    "sphere": lambda: sphere_through_sheet(),
    "plus": plus_crossing,
    "pierced": lambda: (lambda s: (s.garment, s.positions))(generate(SceneRecipe("piercedSheet", resolution=14))),
    "nested": lambda: (lambda s: (s.garment, s.positions))(generate(SceneRecipe("nestedPierce", resolution=16))),
}


@pytest.mark.parametrize("name", sorted(SCENES))
def test_classification_matches_flood_fill_oracle(backend, name):
    mesh, x = SCENES[name]()
    inter, contours, kept, cls = _classify(mesh, x)
    expected, oracle = oracle_classification(x, mesh.faces)
    np.testing.assert_array_equal(cls.non_repelled, expected)
    assert sorted(c.closed for c in contours) == sorted(c["closed"] for c in oracle)
    # every intersecting pair belongs to exactly one contour
    seen = sorted(i for c in contours for i in c.segments)
    assert seen == list(range(len(inter)))


def test_sphere_ring_is_closed_and_cuts_both_pieces():
    mesh, x = sphere_through_sheet()
    inter, contours, kept, cls = _classify(mesh, x)
    assert len(contours) == 1 and contours[0].closed
    c = contours[0]
    sheet_nodes = set(range(mesh.pieces[0].vertices[1]))
    inside_sheet = c.inside_nodes & sheet_nodes
    # the disc under the sphere is the smaller side of the sheet
    r = np.linalg.norm(x[sorted(inside_sheet), :2] - [0.013, 0.021], axis=1)
    assert r.max() < 0.26
    assert len(inside_sheet) < len(sheet_nodes) / 2
    assert c.inside_nodes & set(range(mesh.pieces[1].vertices[0], mesh.n_vertices))
    assert not (c.inside_nodes & c.outside_nodes)


def test_open_contour_marks_touched_nodes_only():
    mesh, x = plus_crossing()
    inter, contours, kept, cls = _classify(mesh, x)
    assert len(contours) == 1 and not contours[0].closed
    touched = np.zeros(mesh.n_vertices, bool)
    touched[sorted(contours[0].touched_nodes)] = True
    np.testing.assert_array_equal(cls.non_repelled, touched)


def test_nested_inner_contour_is_removed():
    s = generate(SceneRecipe("nestedPierce", resolution=16))
    inter, contours, kept, cls = _classify(s.garment, s.positions)
    assert sum(c.closed for c in contours) == 2
    assert sum(c.closed for c in kept) == 1
    outer = [c for c in kept if c.closed][0]
    inner = [c for c in contours if c.closed and c is not outer][0]
    assert inner.touched_nodes <= outer.inside_nodes


def test_polyline_is_continuous():
    mesh, x = sphere_through_sheet()
    inter = detect_intersections(mesh, x)
    (c,) = make_contours(inter, mesh)
    pts = contour_polyline(c, inter)
    assert len(pts) == len(c)
    steps = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    seg_len = np.linalg.norm(inter.segment_vectors(), axis=1)
    # consecutive points are joined by exactly one intersection segment each
    assert np.isclose(np.sort(steps), np.sort(seg_len)).all()


def test_split_without_separation_raises():
    mesh, x = slot_crossing()
    inter = detect_intersections(mesh, x)
    (c,) = make_contours(inter, mesh)
    with pytest.raises(SplitFailed):
        split_by_closed_contour(c, mesh)


def test_correspondence_split_requires_all_four_nodes_repelled():
    mesh, x = sphere_through_sheet(sheet_res=12)
    inter, contours, kept, cls = _classify(mesh, x)
    corr = find_cloth_correspondences(mesh, x, x, eps=0.05)
    rep, non = classify_correspondences(corr, cls, mesh)
    assert len(rep) + len(non) == len(corr) and len(non) > 0
    nr = cls.non_repelled
    for c in rep:
        assert not nr[c.node] and not nr[mesh.faces[c.face]].any()
    for c in non:
        assert nr[c.node] or nr[mesh.faces[c.face]].any()


def test_graph_without_classification_repels_everything():
    mesh, x = sphere_through_sheet(sheet_res=12)
    g = build_input_graph(mesh, x, x, config=GraphConfig(eps_cloth=0.05, classify=False))
    assert len(g.non_repulsive) == 0 and len(g.repulsive) > 0
    assert g.summary()["contours_closed"] == 1


def test_empty_intersections():
    x, f = grid_sheet(3, 3, 1.0, 1.0)
    mesh = build_topology(x, f)
    inter, contours, kept, cls = _classify(mesh, x)
    assert contours == [] and not cls.non_repelled.any()
