#!/usr/bin/env python3
"""
Procedurally generated hand models.

The bundled synthetic hand has a box palm, two fingers and a thumb (seven
joints, a little over 500 vertices) so everything can run without licensed
hand assets. Units are millimeters; the palm faces -z, fingers point +y and
the thumb points -x.
"""

import logging
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
import trimesh

from geometry.mesh import TriMesh
from geometry.primitives import box, revolve
from hand.model import HandModel

logger = logging.getLogger(__name__)

PALM_EXTENTS = (40.0, 60.0, 20.0)
FINGER_RADIUS = 7.0
FINGER_SECTIONS = 8
RING_SPACING = 5.0
PALM_GAP = 1.0
BLEND_HALF_WIDTH = 5.0
PALMAR_Z = -FINGER_RADIUS

FINGER_AXIS = np.array([-1.0, 0.0, 0.0])
THUMB_AXIS = np.array([0.0, -1.0, 0.0])
ABDUCTION_AXIS = np.array([0.0, 0.0, 1.0])

JOINT_NAMES = (
    "palm",
    "index_mcp",
    "index_pip",
    "middle_mcp",
    "middle_pip",
    "thumb_mcp",
    "thumb_pip",
)
PARENTS = (-1, 0, 1, 0, 3, 0, 5)


def tube(
    length: float, radius: float = FINGER_RADIUS, sections: int = FINGER_SECTIONS
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed capsule-ended tube along +z from z=0 (flat base) to z=length (round tip).

    Returns:
        (vertices, faces, height of every vertex along the axis)
    """
    side_end = length - radius
    n_side = max(1, int(np.ceil(side_end / RING_SPACING)))
    tip_angles = np.deg2rad([30.0, 60.0])
    profile = np.vstack(
        [
            [[0.0, 0.0], [0.5 * radius, 0.0]],
            np.column_stack([np.full(n_side + 1, radius), np.linspace(0.0, side_end, n_side + 1)]),
            np.column_stack([radius * np.cos(tip_angles), side_end + radius * np.sin(tip_angles)]),
            [[0.0, length]],
        ]
    )
    vertices, faces, rows = revolve(profile, sections)
    return vertices, faces, profile[rows, 1]


def _place(local: np.ndarray, base: Sequence[float], direction: Sequence[float]) -> np.ndarray:
    direction = np.asarray(direction, dtype=np.float64)
    rotation = trimesh.geometry.align_vectors([0.0, 0.0, 1.0], direction / np.linalg.norm(direction))[:3, :3]
    return local @ rotation.T + np.asarray(base, dtype=np.float64)


def _two_segment_weights(heights: np.ndarray, split: float) -> np.ndarray:
    """Weight on the distal joint; linear blend within BLEND_HALF_WIDTH of the split."""
    return np.clip((heights - (split - BLEND_HALF_WIDTH)) / (2.0 * BLEND_HALF_WIDTH), 0.0, 1.0)


@lru_cache(maxsize=1)
def synthetic_hand() -> HandModel:
    """The bundled 7-joint hand with a 9-coefficient pose subspace (6 flexions, 3 abductions)."""
    palm = box(PALM_EXTENTS, max_edge=20.0)
    half_x, half_y, _ = (0.5 * e for e in PALM_EXTENTS)

    # (mcp joint, pip joint, base of the tube, direction, segment lengths)
    digits = [
        (1, 2, (-10.0, half_y + PALM_GAP, 0.0), (0.0, 1.0, 0.0), (40.0, 35.0)),
        (3, 4, (10.0, half_y + PALM_GAP, 0.0), (0.0, 1.0, 0.0), (40.0, 35.0)),
        (5, 6, (-half_x - PALM_GAP, 20.0, 0.0), (-1.0, 0.0, 0.0), (30.0, 28.0)),
    ]

    vertices = [palm.vertices]
    faces = [palm.faces]
    weights = [np.eye(len(JOINT_NAMES))[np.zeros(palm.n_vertices, dtype=np.int64)]]
    joints = np.zeros((len(JOINT_NAMES), 3))
    tips: List[int] = []
    offset = palm.n_vertices
    for mcp, pip, base, direction, (proximal, distal) in digits:
        local, tube_faces, heights = tube(proximal + distal)
        vertices.append(_place(local, base, direction))
        faces.append(tube_faces + offset)
        distal_weight = _two_segment_weights(heights, proximal)
        w = np.zeros((len(local), len(JOINT_NAMES)))
        w[:, mcp] = 1.0 - distal_weight
        w[:, pip] = distal_weight
        weights.append(w)
        hinge = np.array([0.0, 0.0, PALMAR_Z])
        joints[mcp] = np.asarray(base) + hinge
        joints[pip] = np.asarray(base) + proximal * np.asarray(direction) + hinge
        offset += len(local)
        tips.append(offset - 1)

    flexion_axes = np.zeros((len(JOINT_NAMES), 3))
    flexion_axes[[1, 2, 3, 4]] = FINGER_AXIS
    flexion_axes[[5, 6]] = THUMB_AXIS

    n_joints = len(JOINT_NAMES)
    pose_basis = np.zeros((3 * n_joints, 9))
    for column, joint in enumerate(range(1, n_joints)):
        pose_basis[3 * joint:3 * joint + 3, column] = flexion_axes[joint]
    for column, joint in enumerate((1, 3, 5), start=6):
        pose_basis[3 * joint:3 * joint + 3, column] = ABDUCTION_AXIS

    model = HandModel(
        rest_mesh=TriMesh.from_arrays(np.vstack(vertices), np.vstack(faces)),
        joints_rest=joints,
        parents=np.array(PARENTS),
        skinning_weights=np.vstack(weights),
        pose_basis=pose_basis,
        pose_mean=np.zeros(3 * n_joints),
        joint_names=JOINT_NAMES,
        flexion_axes=flexion_axes,
        tip_vertices=tuple(tips),
        name="synthetic-hand",
    )
    logger.debug(f"Built synthetic hand: {model.n_vertices} vertices, {model.rest_mesh.n_faces} faces")
    return model


def build_finger_chain(segment_lengths: Sequence[float] = (30.0, 25.0, 20.0)) -> HandModel:
    """
    Single straight finger along +y with one joint per segment.

    Joints sit on the tube axis at the segment starts, every vertex is bound
    rigidly to the segment it lies in, and the pose basis has one flexion
    column (about +x) per joint. The tip vertex is the last vertex.
    """
    lengths = np.asarray(segment_lengths, dtype=np.float64)
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    local, faces, heights = tube(float(lengths.sum()))
    vertices = _place(local, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))

    n_joints = len(lengths)
    segment = np.searchsorted(starts, heights, side="right") - 1
    weights = np.eye(n_joints)[np.clip(segment, 0, n_joints - 1)]
    joints = np.column_stack([np.zeros(n_joints), starts, np.zeros(n_joints)])
    pose_basis = np.zeros((3 * n_joints, n_joints))
    for j in range(n_joints):
        pose_basis[3 * j, j] = 1.0

    return HandModel(
        rest_mesh=TriMesh.from_arrays(vertices, faces),
        joints_rest=joints,
        parents=np.arange(n_joints) - 1,
        skinning_weights=weights,
        pose_basis=pose_basis,
        pose_mean=np.zeros(3 * n_joints),
        joint_names=tuple(f"segment_{j}" for j in range(n_joints)),
        flexion_axes=np.tile([1.0, 0.0, 0.0], (n_joints, 1)),
        tip_vertices=(len(vertices) - 1,),
        name="finger-chain",
    )
