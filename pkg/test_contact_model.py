#!/usr/bin/env python3
"""
Tests for the virtual-capsule contact model and its gradients.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from config import CapsuleConfig  # noqa: E402
from contact.capsule import (  # noqa: E402
    ContactMap,
    capsule_distance,
    contact_maps,
    contact_maps_grad,
    contact_value,
)
from contact.io import load_contact_maps, save_contact_maps  # noqa: E402
from errors import EmptyMesh, FileFormatError, InvalidContactMap, StaleCorrespondence  # noqa: E402
from geometry.mesh import TriMesh  # noqa: E402
from geometry.primitives import box, icosphere  # noqa: E402
from hand.model import HandJacobian, HandParams, ParamLayout  # noqa: E402
from hand.synthetic import synthetic_hand  # noqa: E402
from optimization.gradcheck import finite_difference  # noqa: E402

CFG = CapsuleConfig()
UP = np.array([0.0, 0.0, 1.0])


def _grid(z: float, facing_up: bool, spacing: float = 4.0) -> TriMesh:
    """3x3 vertex patch in the plane z, normals +z or -z."""
    xs, ys = np.meshgrid(np.arange(3) * spacing, np.arange(3) * spacing, indexing="ij")
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.full(9, z)])
    faces = []
    for i in range(2):
        for j in range(2):
            a = 3 * i + j
            b, c, d = a + 1, a + 3, a + 4
            faces += [[a, d, b], [a, c, d]] if facing_up else [[a, b, d], [a, d, c]]
    return TriMesh.from_arrays(vertices, faces)


def _translation_jacobian(n_vertices: int) -> HandJacobian:
    """Jacobian of hand vertices that only move with the global translation."""
    layout = ParamLayout(n_pose=0, n_shape=0)
    vertices = np.zeros((n_vertices, 3, layout.size))
    vertices[:, :, layout.translation] = np.eye(3)
    return HandJacobian(indices=np.arange(n_vertices), vertices=vertices, layout=layout)


def _brute_force(anchors: TriMesh, queries: TriMesh, cfg: CapsuleConfig):
    phi = np.stack(
        [capsule_distance(queries.vertices, a, n, cfg) for a, n in zip(anchors.vertices, anchors.vertex_normals)]
    )
    return phi.argmin(axis=1), phi.min(axis=1)


def test_capsule_distance_cases():
    anchor = np.array([1.0, 2.0, 3.0])
    assert capsule_distance(anchor, anchor, UP, CFG) == 0.0
    assert capsule_distance(anchor + 2.5 * UP, anchor, UP, CFG) == pytest.approx(2.0)
    midpoint = anchor + 0.5 * (CFG.c_top - CFG.c_bot) * UP
    assert capsule_distance(midpoint + [3.0, 0.0, 0.0], anchor, UP, CFG) == pytest.approx(3.0)


def test_contact_value_points():
    assert contact_value(0.0, CFG) == 1.0
    assert contact_value(0.5, CFG) == 1.0
    assert contact_value(2.0, CFG) == 0.5
    assert contact_value(10.0, CFG) == pytest.approx(0.1)
    values = contact_value(np.linspace(0.0, 50.0, 101), CFG)
    assert np.all((values >= 0.0) & (values <= 1.0))
    assert np.all(np.diff(values) <= 0.0)


def test_interpenetration_tolerance():
    """A hand point up to c_bot + c_rad = 2 mm inside along -n still counts as full contact."""
    anchor = np.zeros(3)
    for depth in (0.5, 1.0, 1.5, 2.0):
        assert contact_value(capsule_distance(-depth * UP, anchor, UP, CFG), CFG) == 1.0
    assert contact_value(capsule_distance(-2.5 * UP, anchor, UP, CFG), CFG) < 1.0


def test_far_hand_has_almost_no_contact():
    obj = icosphere(20.0, subdivisions=2)
    hand = icosphere(10.0, subdivisions=2, center=(80.0, 0.0, 0.0))
    result = contact_maps(obj, hand, CFG)
    assert result.object_map.values.max() <= 0.02
    assert result.hand_map.values.max() <= 0.02


def test_touching_vertices_get_full_contact():
    obj = box((20.0, 20.0, 20.0))
    hand = box((20.0, 20.0, 20.0), center=(20.0, 0.0, 0.0))
    result = contact_maps(obj, hand, CFG)
    shared = np.flatnonzero(np.isclose(obj.vertices[:, 0], 10.0))
    assert len(shared) == 4
    np.testing.assert_array_equal(result.object_map.values[shared], 1.0)
    np.testing.assert_array_equal(result.object_correspondence.phi[shared], 0.0)


@pytest.mark.parametrize("seed", range(50))
def test_contact_maps_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    obj = icosphere(15.0, subdivisions=2, center=rng.uniform(-3, 3, size=3))
    hand = box(rng.uniform(10, 25, size=3), center=(14.0, 0.0, 0.0) + rng.uniform(-3, 3, size=3), max_edge=6.0)
    result = contact_maps(obj, hand, CFG)

    index, phi = _brute_force(obj, hand, CFG)
    np.testing.assert_array_equal(result.object_correspondence.indices, index)
    np.testing.assert_array_equal(result.object_correspondence.phi, phi)
    np.testing.assert_array_equal(result.object_map.values, contact_value(phi, CFG))

    index, phi = _brute_force(hand, obj, CFG)
    np.testing.assert_array_equal(result.hand_correspondence.indices, index)
    np.testing.assert_array_equal(result.hand_map.values, contact_value(phi, CFG))

    # Euclidean nearest opposing vertex, lowest index among ties
    squared = ((obj.vertices[:, None, :] - hand.vertices[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(result.object_correspondence.nearest, squared.argmin(axis=1))
    np.testing.assert_array_equal(result.hand_correspondence.nearest, squared.argmin(axis=0))


def test_parallel_patches_are_symmetric():
    obj = _grid(0.0, facing_up=True)
    hand = _grid(3.0, facing_up=False)
    result = contact_maps(obj, hand, CFG)
    np.testing.assert_array_equal(result.object_correspondence.indices, np.arange(9))
    np.testing.assert_allclose(result.object_map.values, 0.4)
    np.testing.assert_allclose(result.hand_map.values, result.object_map.values[result.hand_correspondence.indices])


def test_moving_away_never_increases_contact():
    obj = _grid(0.0, facing_up=True)
    previous = None
    for gap in np.linspace(0.0, 10.0, 21):
        values = contact_maps(obj, _grid(gap, facing_up=False), CFG).object_map.values
        if previous is not None:
            assert np.all(values <= previous)
        previous = values


def test_empty_mesh_rejected():
    empty = TriMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3)))
    with pytest.raises(EmptyMesh):
        contact_maps(empty, box(), CFG)


def test_gradient_matches_hand_differentiation():
    """Hand vertex 2 mm to the side of the capsule: dC/dx = -c_rad / phi^2 = -0.25 per mm."""
    obj = TriMesh.from_arrays([[0, 0, 0], [-10, 0, 0], [0, -10, 0]], [[0, 1, 2]])
    hand = TriMesh.from_arrays([[2, 0, 0], [12, 0, 0], [2, 10, 0]], [[0, 1, 2]])
    result = contact_maps(obj, hand, CFG)
    assert result.object_map.values[0] == 0.5
    grad = contact_maps_grad(result.object_correspondence, _translation_jacobian(3))
    np.testing.assert_allclose(grad[0], [-0.25, 0.0, 0.0, 0.0, 0.0, 0.0], atol=1e-12)


def test_saturated_vertex_has_zero_gradient():
    obj = TriMesh.from_arrays([[0, 0, 0], [-10, 0, 0], [0, -10, 0]], [[0, 1, 2]])
    hand = TriMesh.from_arrays([[0.5, 0, 0], [12, 0, 0], [0.5, 10, 0]], [[0, 1, 2]])
    result = contact_maps(obj, hand, CFG)
    assert result.object_map.values[0] == 1.0
    grad = contact_maps_grad(result.object_correspondence, _translation_jacobian(3))
    np.testing.assert_array_equal(grad[0], np.zeros(6))


def test_stale_correspondence_rejected():
    obj = icosphere(10.0, subdivisions=1)
    hand = icosphere(5.0, subdivisions=1, center=(16.0, 0.0, 0.0))
    result = contact_maps(obj, hand, CFG)
    with pytest.raises(StaleCorrespondence):
        contact_maps_grad(result.object_correspondence, _translation_jacobian(hand.n_vertices + 1))


@pytest.mark.parametrize("seed", [0, 1])
def test_full_gradient_matches_finite_differences(seed):
    """Weighted sum of both maps differentiated through the hand pose."""
    model = synthetic_hand()
    rng = np.random.default_rng(seed)
    # sphere just below the index finger
    obj = icosphere(15.0, subdivisions=3, center=(-10.0, 60.0, -23.5))
    base = HandParams(theta=rng.uniform(-0.05, 0.05, size=model.n_pose))
    layout = base.layout
    w_obj = rng.uniform(0.0, 1.0, size=obj.n_vertices)
    w_hand = rng.uniform(0.0, 1.0, size=model.n_vertices)

    def weighted_contact(vector):
        hand = model.pose(HandParams.from_vector(vector, layout)).mesh
        result = contact_maps(obj, hand, CFG)
        return float(w_obj @ result.object_map.values + w_hand @ result.hand_map.values)

    x0 = base.to_vector()
    posed = model.pose(base)
    result = contact_maps(obj, posed.mesh, CFG)
    assert result.object_map.values.max() > 0.1
    jacobian = posed.jacobian(with_normals=True)
    analytic = w_obj @ contact_maps_grad(result.object_correspondence, jacobian) + w_hand @ contact_maps_grad(
        result.hand_correspondence, jacobian
    )
    check = finite_difference(weighted_contact, x0, eps=1e-6)
    assert np.count_nonzero(check.smooth) >= layout.size // 2
    assert np.linalg.norm(analytic) > 0
    assert check.relative_error(analytic) < 1e-3


def test_contact_map_validation():
    with pytest.raises(InvalidContactMap):
        ContactMap(values=[0.2, 1.5], which_mesh="object")
    with pytest.raises(InvalidContactMap):
        ContactMap(values=[0.2], which_mesh="table")
    with pytest.raises(InvalidContactMap):
        ContactMap(values=[np.nan], which_mesh="hand")


@pytest.mark.parametrize("suffix", [".json", ".csv"])
def test_contact_map_files(tmp_path, suffix):
    maps = [
        ContactMap(values=[0.0, 0.25, 1.0], which_mesh="object"),
        ContactMap(values=[0.5, 0.75], which_mesh="hand"),
    ]
    loaded = load_contact_maps(save_contact_maps(maps, tmp_path / f"maps{suffix}"))
    assert set(loaded) == {"object", "hand"}
    np.testing.assert_allclose(loaded["object"].values, [0.0, 0.25, 1.0])
    np.testing.assert_allclose(loaded["hand"].values, [0.5, 0.75])


def test_contact_map_file_errors(tmp_path):
    with pytest.raises(FileFormatError):
        load_contact_maps(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"mesh": "object", "values": [2.0]}')
    with pytest.raises(FileFormatError):
        load_contact_maps(bad)
    twice = tmp_path / "twice.json"
    twice.write_text('{"maps": [{"mesh": "hand", "values": [0]}, {"mesh": "hand", "values": [1]}]}')
    with pytest.raises(FileFormatError):
        load_contact_maps(twice)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
