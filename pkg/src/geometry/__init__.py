"""Triangle meshes, spatial queries and voxel volumes."""

from geometry.mesh import TriMesh, compute_normals, vertex_normal_jacobian
from geometry.queries import (
    PointIndexAccelerator,
    SurfaceQuery,
    nearest_vertex,
    signed_distance,
    unsigned_distance,
)
from geometry.voxel import VoxelGrid, intersection_volume, voxelize

__all__ = [
    "TriMesh",
    "compute_normals",
    "vertex_normal_jacobian",
    "PointIndexAccelerator",
    "SurfaceQuery",
    "nearest_vertex",
    "signed_distance",
    "unsigned_distance",
    "VoxelGrid",
    "intersection_volume",
    "voxelize",
]
