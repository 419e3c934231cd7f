#!/usr/bin/env python3
"""
Virtual-capsule contact model.

Every vertex of one mesh carries a line segment along its normal, from
`anchor - c_bot * n` (inside) to `anchor + c_top * n` (outside). The contact
value of that vertex is

    C = min(c_rad / phi, 1)

where phi is the distance from the segment to the closest vertex of the other
mesh (closest by phi itself). Contact maps are computed on the object
(capsules on object vertices, hand vertices as queries) and on the hand
(capsules on hand vertices, object vertices as queries).
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple, Union

import numpy as np

from config import CapsuleConfig
from errors import DimensionMismatch, EmptyMesh, InvalidContactMap, StaleCorrespondence
from geometry.mesh import TriMesh
from geometry.queries import PointIndexAccelerator, dot3, norm3, select_min_per_query
from hand.model import HandJacobian

logger = logging.getLogger(__name__)

MESH_KINDS = ("hand", "object")
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class ContactMap:
    """Per-vertex contact values in [0, 1] on the hand or on the object."""

    values: np.ndarray
    which_mesh: str

    def __post_init__(self):
        if self.which_mesh not in MESH_KINDS:
            raise InvalidContactMap(f"which_mesh must be one of {MESH_KINDS}, got {self.which_mesh!r}")
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise InvalidContactMap("Contact values must be finite")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise InvalidContactMap(f"Contact values must lie in [0, 1], got [{values.min()}, {values.max()}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def subset(self, indices: np.ndarray) -> "ContactMap":
        return ContactMap(values=self.values[np.asarray(indices, dtype=np.int64)], which_mesh=self.which_mesh)

    def to_dict(self) -> Dict[str, Any]:
        return {"mesh": self.which_mesh, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ContactMap":
        if "mesh" not in data or "values" not in data:
            raise InvalidContactMap("Contact map needs 'mesh' and 'values' keys")
        return cls(values=data["values"], which_mesh=data["mesh"])


@dataclass(frozen=True, eq=False)
class ContactCorrespondence:
    """
    For every capsule-carrying vertex, the opposing vertex with the smallest phi.

    `offsets` is query minus closest segment point and `alpha` the clamped
    position of that point along the normal; both are what the gradient needs.
    `nearest` is the Euclidean-nearest opposing vertex of each anchor.
    """

    anchor_mesh: str
    indices: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray
    offsets: np.ndarray
    n_opposing: int
    c_rad: float
    nearest: np.ndarray

    @property
    def n_anchors(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class ContactResult:
    object_map: ContactMap
    hand_map: ContactMap
    object_correspondence: ContactCorrespondence
    hand_correspondence: ContactCorrespondence


def segment_offsets(
    queries: np.ndarray, anchors: np.ndarray, normals: np.ndarray, cfg: CapsuleConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Row-wise closest point on each capsule segment.

    Returns:
        (alpha (N,), offset query - segment point (N, 3), phi (N,))
    """
    d = queries - anchors
    alpha = np.clip(dot3(d, normals), -cfg.c_bot, cfg.c_top)
    offsets = d - alpha[:, None] * normals
    return alpha, offsets, norm3(offsets)


def capsule_distance(
    query: np.ndarray, anchor: np.ndarray, normal: np.ndarray, cfg: CapsuleConfig
) -> Union[float, np.ndarray]:
    """Distance (mm) from point(s) to the capsule segment at `anchor` along unit `normal`."""
    query = np.asarray(query, dtype=np.float64)
    single = query.ndim == 1
    q = query.reshape(-1, 3)
    a = np.broadcast_to(np.asarray(anchor, dtype=np.float64).reshape(-1, 3), q.shape)
    n = np.broadcast_to(np.asarray(normal, dtype=np.float64).reshape(-1, 3), q.shape)
    _, _, phi = segment_offsets(q, a, n, cfg)
    return float(phi[0]) if single else phi


def contact_value(phi: Union[float, np.ndarray], cfg: CapsuleConfig) -> Union[float, np.ndarray]:
    """min(c_rad / phi, 1); saturates to exactly 1 for phi <= c_rad."""
    result = cfg.c_rad / np.maximum(np.asarray(phi, dtype=np.float64), cfg.c_rad)
    return float(result) if np.ndim(result) == 0 else result


def contact_value_derivative(phi: np.ndarray, c_rad: float) -> np.ndarray:
    """dC/dphi: -c_rad / phi^2 outside the saturated region, 0 inside and on its boundary."""
    phi = np.asarray(phi, dtype=np.float64)
    outside = phi > c_rad
    safe = np.where(outside, phi, 1.0)
    return np.where(outside, -c_rad / safe ** 2, 0.0)


def closest_capsule_queries(
    anchors: np.ndarray,
    normals: np.ndarray,
    queries: np.ndarray,
    accel: PointIndexAccelerator,
    cfg: CapsuleConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Per anchor, the query point with the smallest phi (ties to the lowest index).

    The anchor lies on its own segment, so phi_min <= |nearest query - anchor|;
    any better query is then within that distance plus the segment reach.

    Returns:
        (indices, phi, alpha, offsets, Euclidean-nearest query index)
    """
    n = len(anchors)
    indices = np.empty(n, dtype=np.int64)
    phi = np.empty(n)
    alpha = np.empty(n)
    offsets = np.empty((n, 3))
    nearest_idx = np.empty(n, dtype=np.int64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        a = anchors[start:stop]
        nrm = normals[start:stop]
        closest, nearest = accel.query(a)
        radii = nearest + cfg.reach + 1e-9 * (1.0 + nearest)
        anchor_idx, query_idx = accel.pairs_within(a, radii)
        al, off, ph = segment_offsets(queries[query_idx], a[anchor_idx], nrm[anchor_idx], cfg)
        picked = select_min_per_query(anchor_idx, query_idx, ph, len(a))
        indices[start:stop] = query_idx[picked]
        phi[start:stop] = ph[picked]
        alpha[start:stop] = al[picked]
        offsets[start:stop] = off[picked]
        nearest_idx[start:stop] = closest
    return indices, phi, alpha, offsets, nearest_idx


def _correspond(anchor_mesh: str, anchors: TriMesh, opposing: TriMesh, cfg: CapsuleConfig) -> ContactCorrespondence:
    indices, phi, alpha, offsets, nearest = closest_capsule_queries(
        anchors.vertices, anchors.vertex_normals, opposing.vertices, opposing.point_index, cfg
    )
    return ContactCorrespondence(
        anchor_mesh=anchor_mesh,
        indices=indices,
        phi=phi,
        alpha=alpha,
        offsets=offsets,
        n_opposing=opposing.n_vertices,
        c_rad=cfg.c_rad,
        nearest=nearest,
    )


def contact_maps(object_mesh: TriMesh, hand: TriMesh, cfg: CapsuleConfig) -> ContactResult:
    """
    Object and hand contact maps with their phi-argmin correspondences.

    Raises:
        EmptyMesh: if either mesh has no vertices
    """
    if object_mesh.n_vertices == 0 or hand.n_vertices == 0:
        raise EmptyMesh("Contact maps need non-empty hand and object meshes")
    if len(object_mesh.vertex_normals) != object_mesh.n_vertices or len(hand.vertex_normals) != hand.n_vertices:
        raise DimensionMismatch("Contact maps need vertex normals on both meshes")
    object_corr = _correspond("object", object_mesh, hand, cfg)
    hand_corr = _correspond("hand", hand, object_mesh, cfg)
    return ContactResult(
        object_map=ContactMap(values=contact_value(object_corr.phi, cfg), which_mesh="object"),
        hand_map=ContactMap(values=contact_value(hand_corr.phi, cfg), which_mesh="hand"),
        object_correspondence=object_corr,
        hand_correspondence=hand_corr,
    )


def contact_maps_grad(correspondence: ContactCorrespondence, hand_jacobian: HandJacobian) -> np.ndarray:
    """
    d(contact value)/d(hand parameters) for every capsule-carrying vertex.

    The correspondence is held fixed. Object-side capsules are static and only
    the matched hand vertex moves; hand-side capsules move with their anchor
    vertex and its normal (phi shifts by -(r/phi) . (d anchor + alpha d normal)).

    Args:
        correspondence: from contact_maps at the current parameters
        hand_jacobian: Jacobian of every hand vertex; hand-side capsules also
            need its normal Jacobian

    Returns:
        (N, D) gradient rows, N = number of capsule-carrying vertices

    Raises:
        StaleCorrespondence: if the hand vertex count does not match
    """
    corr = correspondence
    dC = contact_value_derivative(corr.phi, corr.c_rad)
    safe_phi = np.where(corr.phi > 0, corr.phi, 1.0)
    direction = corr.offsets / safe_phi[:, None]

    if corr.anchor_mesh == "object":
        if hand_jacobian.n_vertices != corr.n_opposing:
            raise StaleCorrespondence(
                f"Correspondence refers to {corr.n_opposing} hand vertices, Jacobian has {hand_jacobian.n_vertices}"
            )
        moving = hand_jacobian.vertices[corr.indices]
        return dC[:, None] * np.einsum("na,nad->nd", direction, moving)

    if hand_jacobian.n_vertices != corr.n_anchors:
        raise StaleCorrespondence(
            f"Correspondence has {corr.n_anchors} hand capsules, Jacobian has {hand_jacobian.n_vertices} vertices"
        )
    if hand_jacobian.normals is None:
        raise DimensionMismatch("Hand-side contact gradients need the normal Jacobian")
    moving = hand_jacobian.vertices + corr.alpha[:, None, None] * hand_jacobian.normals
    return -dC[:, None] * np.einsum("na,nad->nd", direction, moving)
