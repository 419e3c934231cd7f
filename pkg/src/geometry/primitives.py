#!/usr/bin/env python3
"""
Closed primitive meshes (box, sphere, cylinder, surfaces of revolution) in
millimeters.

Meshes are uniformly subdivided until no edge exceeds `max_edge`, so contact
maps computed on them have a usable vertex density.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
import trimesh

from geometry.mesh import TriMesh

# Unit cube corners; faces are split along the diagonal joining the even-parity
# corners so every corner sees the same triangle count on each incident side.
_CUBE_CORNERS = np.array(
    [
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
    ],
    dtype=np.float64,
) * 0.5
_CUBE_FACES = np.array(
    [
        [0, 3, 2], [0, 2, 1],
        [5, 6, 7], [5, 7, 4],
        [0, 1, 5], [0, 5, 4],
        [2, 3, 7], [2, 7, 6],
        [0, 4, 7], [0, 7, 3],
        [1, 2, 5], [2, 6, 5],
    ],
    dtype=np.int64,
)


def _subdivide_to_edge(vertices: np.ndarray, faces: np.ndarray, max_edge: Optional[float]):
    if max_edge is None:
        return vertices, faces
    while True:
        edges = vertices[faces[:, [1, 2, 0]]] - vertices[faces]
        if np.sqrt((edges ** 2).sum(axis=2)).max() <= max_edge:
            return vertices, faces
        vertices, faces = trimesh.remesh.subdivide(vertices, faces)


def _place(vertices: np.ndarray, center: Optional[Sequence[float]]) -> np.ndarray:
    if center is None:
        return vertices
    return vertices + np.asarray(center, dtype=np.float64)


def box(
    extents: Sequence[float] = (20.0, 20.0, 20.0),
    center: Optional[Sequence[float]] = None,
    max_edge: Optional[float] = None,
) -> TriMesh:
    """Axis-aligned closed box."""
    vertices = _CUBE_CORNERS * np.asarray(extents, dtype=np.float64)
    vertices, faces = _subdivide_to_edge(vertices, _CUBE_FACES.copy(), max_edge)
    return TriMesh.from_arrays(_place(vertices, center), faces)


def icosphere(
    radius: float = 10.0,
    subdivisions: int = 3,
    center: Optional[Sequence[float]] = None,
) -> TriMesh:
    sphere = trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius)
    return TriMesh.from_arrays(_place(np.asarray(sphere.vertices), center), np.asarray(sphere.faces))


def revolve(profile: np.ndarray, sections: int = 16) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed surface of revolution about +z.

    Args:
        profile: (P, 2) rows of (radius, height); the first and last rows must
            have radius 0 (poles), all others a positive radius
        sections: vertices per ring

    Returns:
        (vertices, faces, profile row of every vertex)
    """
    profile = np.asarray(profile, dtype=np.float64)
    if profile[0, 0] != 0 or profile[-1, 0] != 0 or np.any(profile[1:-1, 0] <= 0):
        raise ValueError("profile must start and end on the axis")
    angles = 2.0 * np.pi * np.arange(sections) / sections
    rings = profile[1:-1]
    ring_vertices = np.stack(
        [
            rings[:, :1] * np.cos(angles)[None, :],
            rings[:, :1] * np.sin(angles)[None, :],
            np.repeat(rings[:, 1:2], sections, axis=1),
        ],
        axis=-1,
    ).reshape(-1, 3)
    bottom = len(ring_vertices)
    top = bottom + 1
    vertices = np.vstack([ring_vertices, [0.0, 0.0, profile[0, 1]], [0.0, 0.0, profile[-1, 1]]])
    row_of = np.concatenate([np.repeat(np.arange(1, len(profile) - 1), sections), [0, len(profile) - 1]])

    i = np.arange(sections)
    j = (i + 1) % sections
    faces = [np.stack([np.full(sections, bottom), j, i], axis=1)]
    for k in range(len(rings) - 1):
        a, b = k * sections + i, k * sections + j
        c, d = (k + 1) * sections + j, (k + 1) * sections + i
        faces.append(np.stack([a, b, c], axis=1))
        faces.append(np.stack([a, c, d], axis=1))
    last = (len(rings) - 1) * sections
    faces.append(np.stack([last + i, last + j, np.full(sections, top)], axis=1))
    return vertices, np.vstack(faces).astype(np.int64), row_of


def cylinder(
    radius: float = 20.0,
    height: float = 60.0,
    axis: Sequence[float] = (0.0, 0.0, 1.0),
    center: Optional[Sequence[float]] = None,
    sections: int = 32,
    max_edge: float = 4.0,
) -> TriMesh:
    """Closed cylinder centered on the origin, oriented along `axis`."""
    n_side = max(1, int(np.ceil(height / max_edge)))
    n_cap = max(1, int(np.ceil(radius / max_edge)))
    cap_radii = radius * np.arange(1, n_cap) / n_cap
    profile = np.vstack(
        [
            [[0.0, -0.5 * height]],
            np.column_stack([cap_radii, np.full(len(cap_radii), -0.5 * height)]),
            np.column_stack([np.full(n_side + 1, radius), np.linspace(-0.5 * height, 0.5 * height, n_side + 1)]),
            np.column_stack([cap_radii[::-1], np.full(len(cap_radii), 0.5 * height)]),
            [[0.0, 0.5 * height]],
        ]
    )
    vertices, faces, _ = revolve(profile, sections)
    axis = np.asarray(axis, dtype=np.float64)
    rotation = trimesh.geometry.align_vectors([0.0, 0.0, 1.0], axis / np.linalg.norm(axis))[:3, :3]
    return TriMesh.from_arrays(_place(vertices @ rotation.T, center), faces)
