#!/usr/bin/env python3
"""
Triangle mesh representation.

TriMesh holds vertex positions in millimeters, triangle indices and the
area-weighted vertex normals / face normals the contact model reads. Derived
topology (edge incidence, pseudonormals, spatial indices) is computed lazily
and cached on the instance; a mesh is never mutated after construction.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Tuple

import numpy as np

from errors import DegenerateFace, MeshError, NotWatertight

if TYPE_CHECKING:
    from geometry.queries import PointIndexAccelerator, SurfaceQuery

logger = logging.getLogger(__name__)

MIN_FACE_AREA = 1e-12


def _empty_normals() -> np.ndarray:
    return np.zeros((0, 3))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh with per-vertex and per-face unit normals."""

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray = field(default_factory=_empty_normals)
    face_normals: np.ndarray = field(default_factory=_empty_normals)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshError(
                f"Face index out of range for mesh with {len(vertices)} vertices"
            )
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(
            self, "vertex_normals", np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
        )
        object.__setattr__(
            self, "face_normals", np.asarray(self.face_normals, dtype=np.float64).reshape(-1, 3)
        )

    @classmethod
    def from_arrays(cls, vertices, faces) -> "TriMesh":
        """Build a mesh and populate its normals."""
        return compute_normals(cls(vertices=vertices, faces=faces))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_normals(self) -> bool:
        return (
            len(self.vertex_normals) == self.n_vertices
            and len(self.face_normals) == self.n_faces
        )

    @property
    def bounds(self) -> np.ndarray:
        """Axis-aligned bounding box as a (2, 3) array [min, max]."""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same topology, new positions, normals recomputed."""
        return compute_normals(TriMesh(vertices=vertices, faces=self.faces))

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "TriMesh":
        """Rigidly move the mesh: x -> R x + t. Normals are rotated, not recomputed."""
        rotation = np.asarray(rotation, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64)
        return TriMesh(
            vertices=self.vertices @ rotation.T + translation,
            faces=self.faces,
            vertex_normals=self.vertex_normals @ rotation.T,
            face_normals=self.face_normals @ rotation.T,
        )

    def submesh_vertices(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Positions and normals of a vertex subset."""
        indices = np.asarray(indices, dtype=np.int64)
        return self.vertices[indices], self.vertex_normals[indices]

    @cached_property
    def edges(self) -> np.ndarray:
        """Directed edges (F*3, 2), edge k of face f at row 3f+k: (v_k, v_{k+1})."""
        return np.stack([self.faces, np.roll(self.faces, -1, axis=1)], axis=2).reshape(-1, 2)

    @cached_property
    def _edge_topology(self) -> Tuple[np.ndarray, np.ndarray]:
        undirected = np.sort(self.edges, axis=1)
        _, inverse, counts = np.unique(
            undirected, axis=0, return_inverse=True, return_counts=True
        )
        return inverse.reshape(-1), counts

    @property
    def is_watertight(self) -> bool:
        """Every edge shared by exactly two faces."""
        if self.n_faces == 0:
            return False
        _, counts = self._edge_topology
        return bool(np.all(counts == 2))

    def check_watertight(self) -> None:
        if not self.is_watertight:
            _, counts = self._edge_topology if self.n_faces else (None, np.zeros(0))
            bad = int(np.sum(counts != 2))
            raise NotWatertight(f"Mesh is not edge-manifold closed: {bad} edges not shared by two faces")

    @cached_property
    def max_edge_length(self) -> float:
        if self.n_faces == 0:
            return 0.0
        e = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((e * e).sum(axis=1)).max())

    @cached_property
    def vertex_pseudonormals(self) -> np.ndarray:
        """Angle-weighted vertex normals used for inside/outside decisions."""
        tri = self.vertices[self.faces]
        weighted = np.zeros_like(self.vertices)
        for k in range(3):
            u = tri[:, (k + 1) % 3] - tri[:, k]
            w = tri[:, (k + 2) % 3] - tri[:, k]
            cos_angle = np.einsum("ij,ij->i", u, w) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1)
            )
            angle = np.arccos(np.clip(cos_angle, -1.0, 1.0))
            np.add.at(weighted, self.faces[:, k], angle[:, None] * self.face_normals)
        return _normalize_rows(weighted)

    @cached_property
    def edge_pseudonormals(self) -> np.ndarray:
        """(F, 3, 3): for face f and edge k, the normalized sum of both incident face normals."""
        inverse, counts = self._edge_topology
        sums = np.zeros((len(counts), 3))
        np.add.at(sums, inverse, np.repeat(self.face_normals, 3, axis=0))
        return _normalize_rows(sums)[inverse].reshape(-1, 3, 3)

    @cached_property
    def point_index(self) -> "PointIndexAccelerator":
        """Nearest-neighbour index over the vertices."""
        from geometry.queries import PointIndexAccelerator

        return PointIndexAccelerator(self.vertices)

    @cached_property
    def surface(self) -> "SurfaceQuery":
        """Spatial query structure over this mesh."""
        from geometry.queries import SurfaceQuery

        return SurfaceQuery(self)


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1)
    out = np.zeros_like(v)
    ok = norms > 0
    out[ok] = v[ok] / norms[ok, None]
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def compute_normals(mesh: TriMesh) -> TriMesh:
    """
    Populate face normals and area-weighted vertex normals.

    Winding is taken as counter-clockwise seen from outside.

    Raises:
        DegenerateFace: if any triangle area is below 1e-12 mm^2.
    """
    if mesh.n_faces == 0:
        return TriMesh(
            vertices=mesh.vertices,
            faces=mesh.faces,
            vertex_normals=np.tile((0.0, 0.0, 1.0), (mesh.n_vertices, 1)),
            face_normals=np.zeros((0, 3)),
        )
    tri = mesh.vertices[mesh.faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    double_area = np.linalg.norm(cross, axis=1)
    degenerate = np.flatnonzero(0.5 * double_area < MIN_FACE_AREA)
    if degenerate.size:
        raise DegenerateFace(
            f"{degenerate.size} degenerate faces (first: {int(degenerate[0])})"
        )
    face_normals = cross / double_area[:, None]

    # |cross| is twice the area, so summing raw cross products area-weights
    accumulated = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(accumulated, mesh.faces[:, k], cross)
    unused = np.linalg.norm(accumulated, axis=1) == 0
    if unused.any():
        logger.debug(f"{int(unused.sum())} vertices without faces get a +z normal")
    return TriMesh(
        vertices=mesh.vertices,
        faces=mesh.faces,
        vertex_normals=_normalize_rows(accumulated),
        face_normals=face_normals,
    )


def vertex_normal_jacobian(mesh: TriMesh, vertex_jacobian: np.ndarray) -> np.ndarray:
    """
    Derivative of the area-weighted vertex normals w.r.t. a parameter vector.

    Args:
        mesh: mesh at the current parameters (normals populated)
        vertex_jacobian: (V, 3, D) derivative of every vertex position

    Returns:
        (V, 3, D) derivative of every unit vertex normal
    """
    tri = mesh.vertices[mesh.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    ja = vertex_jacobian[mesh.faces[:, 0]]
    de1 = vertex_jacobian[mesh.faces[:, 1]] - ja
    de2 = vertex_jacobian[mesh.faces[:, 2]] - ja
    dcross = np.cross(de1, e2[:, :, None], axisa=1, axisb=1, axisc=1) + np.cross(
        e1[:, :, None], de2, axisa=1, axisb=1, axisc=1
    )

    accumulated = np.zeros_like(mesh.vertices)
    d_accumulated = np.zeros_like(vertex_jacobian)
    cross = np.cross(e1, e2)
    for k in range(3):
        np.add.at(accumulated, mesh.faces[:, k], cross)
        np.add.at(d_accumulated, mesh.faces[:, k], dcross)

    norms = np.linalg.norm(accumulated, axis=1)
    norms[norms == 0] = 1.0
    n = accumulated / norms[:, None]
    # d(N/|N|) = (I - n n^T) dN / |N|
    projected = d_accumulated - n[:, :, None] * np.einsum("va,vad->vd", n, d_accumulated)[:, None, :]
    return projected / norms[:, None, None]
