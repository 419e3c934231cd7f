#!/usr/bin/env python3
"""
Spatial queries over point sets and triangle meshes.

Nearest-neighbour search goes through scipy's cKDTree. Closest points on a
mesh are exact: candidate triangles are pruned with a KD-tree over the
triangle centroids, then resolved with a vectorized closest-point-on-triangle
routine. Inside/outside uses the angle-weighted pseudonormal of the feature
(face, edge or vertex) the closest point lies on.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from errors import EmptyMesh
from geometry.mesh import TriMesh

logger = logging.getLogger(__name__)

# Feature of a triangle a closest point lies on
REGION_FACE = 0
REGION_VERTEX = (1, 2, 3)
REGION_EDGE = (4, 5, 6)  # edges (v0,v1), (v1,v2), (v2,v0)

_TIE_CANDIDATES = 4
_TIE_RTOL = 1e-12
_PAIR_CANDIDATES = 16
_CHUNK = 4096


def dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise dot product with a fixed evaluation order."""
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def norm3(a: np.ndarray) -> np.ndarray:
    return np.sqrt(dot3(a, a))


def _ties(distances: np.ndarray, nearest: np.ndarray) -> np.ndarray:
    return distances <= nearest * (1.0 + _TIE_RTOL)


def _lowest_tied(distances: np.ndarray, indices: np.ndarray) -> np.ndarray:
    tied = _ties(distances, distances[:, :1])
    return np.where(tied, indices, np.iinfo(np.int64).max).min(axis=1).astype(np.int64)


class PointIndexAccelerator:
    """Exact nearest-neighbour index over a fixed 3D point set."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise EmptyMesh("Cannot index an empty point set")
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest point for each query, ties broken by lowest index.

        Rows whose last kd-tree candidate still ties the nearest distance are
        re-queried with twice as many candidates until every tie is seen.

        Returns:
            (indices (N,), distances (N,))
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        k = min(_TIE_CANDIDATES, n)
        distances, indices = self._candidates(queries, k)
        nearest = distances[:, 0].copy()
        best = _lowest_tied(distances, indices)
        pending = np.flatnonzero(_ties(distances[:, -1], nearest)) if k < n else np.zeros(0, dtype=np.int64)
        while pending.size:
            k = min(2 * k, n)
            distances, indices = self._candidates(queries[pending], k)
            best[pending] = _lowest_tied(distances, indices)
            pending = pending[_ties(distances[:, -1], distances[:, 0])] if k < n else pending[:0]
        return best, nearest

    def _candidates(self, queries: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        distances, indices = self._tree.query(queries, k=k)
        return np.asarray(distances).reshape(len(queries), k), np.asarray(indices).reshape(len(queries), k)

    def pairs_within(self, queries: np.ndarray, radii: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Every (query row, point index) pair with distance <= the row's radius.

        Candidates come from k-nearest queries bounded by the largest radius;
        rows whose k-th candidate is still inside are re-queried with twice as
        many candidates.

        Returns:
            (query rows (M,), point indices (M,)), ordered by query row
        """
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(queries),))
        n = len(self.points)
        rows_out: List[np.ndarray] = [np.zeros(0, dtype=np.int64)]
        idx_out: List[np.ndarray] = [np.zeros(0, dtype=np.int64)]
        pending = np.arange(len(queries))
        k = min(_PAIR_CANDIDATES, n)
        while pending.size:
            bound = float(radii[pending].max())
            distances, indices = self._tree.query(
                queries[pending], k=k, distance_upper_bound=bound * (1.0 + 1e-9) + 1e-12
            )
            distances = np.asarray(distances).reshape(len(pending), k)
            indices = np.asarray(indices).reshape(len(pending), k)
            inside = distances <= radii[pending, None]
            more = inside[:, -1] if k < n else np.zeros(len(pending), dtype=bool)
            rows, cols = np.nonzero(inside[~more])
            rows_out.append(pending[~more][rows])
            idx_out.append(indices[~more][rows, cols].astype(np.int64))
            pending = pending[more]
            k = min(2 * k, n)
        query_rows = np.concatenate(rows_out)
        order = np.argsort(query_rows, kind="stable")
        return query_rows[order], np.concatenate(idx_out)[order]


def nearest_vertex(query: np.ndarray, accel: PointIndexAccelerator) -> Tuple[int, float]:
    """Index of and distance to the indexed point closest to `query`."""
    indices, distances = accel.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(indices[0]), float(distances[0])


def flatten_candidates(candidates: List[List[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """Turn ragged candidate lists into parallel (query index, candidate index) arrays."""
    counts = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=len(candidates))
    query_idx = np.repeat(np.arange(len(candidates)), counts)
    if counts.sum() == 0:
        return query_idx, np.zeros(0, dtype=np.int64)
    cand_idx = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates if len(c)])
    return query_idx, cand_idx


def select_min_per_query(
    query_idx: np.ndarray, cand_idx: np.ndarray, values: np.ndarray, n_queries: int
) -> np.ndarray:
    """Position (into the pair arrays) of the smallest value per query, ties to lowest candidate."""
    order = np.lexsort((cand_idx, values, query_idx))
    q_sorted = query_idx[order]
    first = np.r_[0, np.flatnonzero(np.diff(q_sorted)) + 1]
    picked = np.full(n_queries, -1, dtype=np.int64)
    picked[q_sorted[first]] = order[first]
    return picked


def closest_points_on_triangles(
    p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closest point on triangle (a, b, c) to p, row by row.

    Vectorized form of the Voronoi-region test from Ericson's
    "Real-Time Collision Detection".

    Returns:
        (points (N, 3), region codes (N,))
    """
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = dot3(ab, ap)
    d2 = dot3(ac, ap)
    d3 = dot3(ab, bp)
    d4 = dot3(ac, bp)
    d5 = dot3(ab, cp)
    d6 = dot3(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    region = np.full(len(p), -1, dtype=np.int64)
    open_rows = np.ones(len(p), dtype=bool)

    def assign(mask: np.ndarray, points: np.ndarray, code: int) -> None:
        rows = mask & open_rows
        out[rows] = points[rows]
        region[rows] = code
        open_rows[rows] = False

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), a, REGION_VERTEX[0])
        assign((d3 >= 0) & (d4 <= d3), b, REGION_VERTEX[1])
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab, REGION_EDGE[0])
        assign((d6 >= 0) & (d5 <= d6), c, REGION_VERTEX[2])
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac, REGION_EDGE[2])
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign(
            (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
            b + w[:, None] * (c - b),
            REGION_EDGE[1],
        )
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(open_rows.copy(), a + v[:, None] * ab + w[:, None] * ac, REGION_FACE)
    return out, region


@dataclass(frozen=True)
class ClosestPoints:
    """Closest surface points for a batch of queries."""

    points: np.ndarray
    distances: np.ndarray
    faces: np.ndarray
    regions: np.ndarray


class SurfaceQuery:
    """Closest-point and signed-distance queries against one mesh."""

    def __init__(self, mesh: TriMesh):
        if mesh.n_vertices == 0 or mesh.n_faces == 0:
            raise EmptyMesh("Surface queries need a mesh with faces")
        self.mesh = mesh
        self.vertex_index = mesh.point_index
        triangles = mesh.vertices[mesh.faces]
        self._triangles = triangles
        centroids = triangles.mean(axis=1)
        self._centroid_tree = cKDTree(centroids)
        self._radius = float(norm3(triangles - centroids[:, None, :]).max())
        self._slack = 1e-9 * (1.0 + self._radius)

    def closest_points(self, queries: np.ndarray) -> ClosestPoints:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(queries)
        points = np.empty((n, 3))
        distances = np.empty(n)
        faces = np.empty(n, dtype=np.int64)
        regions = np.empty(n, dtype=np.int64)
        for start in range(0, n, _CHUNK):
            stop = min(start + _CHUNK, n)
            chunk = self._closest_chunk(queries[start:stop])
            points[start:stop] = chunk.points
            distances[start:stop] = chunk.distances
            faces[start:stop] = chunk.faces
            regions[start:stop] = chunk.regions
        return ClosestPoints(points=points, distances=distances, faces=faces, regions=regions)

    def _closest_chunk(self, queries: np.ndarray) -> ClosestPoints:
        _, vertex_distance = self.vertex_index.query(queries)
        # the best face lies within (nearest vertex distance + triangle radius) of its centroid
        radii = vertex_distance + self._radius + self._slack
        candidates = self._centroid_tree.query_ball_point(queries, r=radii)
        query_idx, face_idx = flatten_candidates(list(candidates))
        tri = self._triangles[face_idx]
        pts, region = closest_points_on_triangles(queries[query_idx], tri[:, 0], tri[:, 1], tri[:, 2])
        dist = norm3(queries[query_idx] - pts)
        picked = select_min_per_query(query_idx, face_idx, dist, len(queries))
        return ClosestPoints(
            points=pts[picked], distances=dist[picked], faces=face_idx[picked], regions=region[picked]
        )

    def pseudonormals(self, faces: np.ndarray, regions: np.ndarray) -> np.ndarray:
        """Normal of the closest feature: face normal, edge or vertex pseudonormal."""
        mesh = self.mesh
        normals = mesh.face_normals[faces].copy()
        for corner, code in enumerate(REGION_VERTEX):
            rows = regions == code
            normals[rows] = mesh.vertex_pseudonormals[mesh.faces[faces[rows], corner]]
        for edge, code in enumerate(REGION_EDGE):
            rows = regions == code
            normals[rows] = mesh.edge_pseudonormals[faces[rows], edge]
        return normals

    def unsigned_distance(self, queries: np.ndarray) -> np.ndarray:
        return self.closest_points(queries).distances

    def signed_distance(self, queries: np.ndarray) -> np.ndarray:
        """Negative inside. The caller is responsible for watertightness."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        closest = self.closest_points(queries)
        normals = self.pseudonormals(closest.faces, closest.regions)
        side = dot3(queries - closest.points, normals)
        return np.where(side < 0, -closest.distances, closest.distances)


def signed_distance(query: np.ndarray, mesh: TriMesh) -> Union[float, np.ndarray]:
    """
    Signed distance from point(s) to a closed mesh, negative inside (mm).

    Accepts a single (3,) point, returning a float, or an (N, 3) batch.

    Raises:
        NotWatertight: if some edge is not shared by exactly two faces.
    """
    mesh.check_watertight()
    query = np.asarray(query, dtype=np.float64)
    result = mesh.surface.signed_distance(query)
    if query.ndim == 1:
        return float(result[0])
    return result


def unsigned_distance(query: np.ndarray, mesh: TriMesh) -> Union[float, np.ndarray]:
    """Distance from point(s) to the closest point on the mesh surface (mm)."""
    query = np.asarray(query, dtype=np.float64)
    result = mesh.surface.unsigned_distance(query)
    if query.ndim == 1:
        return float(result[0])
    return result
