#!/usr/bin/env python3
"""
Contact and penetration losses.

    E_O   = mean_i  w(C_i, T_i) |C_i - T_i|,  w = lambda_miss if C_i < T_i else 1
    E_H   = same form on the hand map (0 without a hand target)
    E_pen = mean_i max(0, (v_O_i - v_H_j) . n_O_i - c_pen),  j = nearest hand vertex
            (only pairs where v_H_j lies behind the surface at its own nearest object vertex)
    E     = E_H + lambda_O E_O + lambda_pen E_pen
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import LossConfig
from contact.capsule import ContactMap, ContactResult
from errors import DimensionMismatch, StaleCorrespondence
from geometry.mesh import TriMesh
from geometry.queries import dot3


def _residual(current: ContactMap, target: ContactMap):
    if len(current) != len(target):
        raise DimensionMismatch(f"Contact map has {len(current)} values, target has {len(target)}")
    return current.values - target.values


def contact_loss(current: ContactMap, target: ContactMap, cfg: LossConfig) -> float:
    """Asymmetric mean absolute contact error; missing contact costs lambda_miss times more."""
    residual = _residual(current, target)
    if residual.size == 0:
        return 0.0
    weights = np.where(residual < 0, cfg.lambda_miss, 1.0)
    return float(np.mean(weights * np.abs(residual)))


def contact_loss_grad(current: ContactMap, target: ContactMap, cfg: LossConfig) -> np.ndarray:
    """dE/dC per vertex; 0 where the map already matches its target."""
    residual = _residual(current, target)
    if residual.size == 0:
        return np.zeros(0)
    slope = np.where(residual < 0, -cfg.lambda_miss, np.where(residual > 0, 1.0, 0.0))
    return slope / residual.size


def loss_object(current: ContactMap, target: ContactMap, cfg: LossConfig) -> float:
    return contact_loss(current, target, cfg)


def loss_hand(current: ContactMap, target: Optional[ContactMap], cfg: LossConfig) -> float:
    """Hand contact loss; 0 when no hand target is available."""
    if target is None:
        return 0.0
    return contact_loss(current, target, cfg)


@dataclass(frozen=True, eq=False)
class NearestCorrespondence:
    """Nearest hand vertex (Euclidean) for every object vertex.

    interior flags object vertices whose partner hand vertex is inside the object,
    judged against the normal of that hand vertex's own nearest object vertex.
    """

    indices: np.ndarray
    interior: np.ndarray
    n_object: int
    n_hand: int


def nearest_hand_vertices(
    object_mesh: TriMesh, hand: TriMesh, contact: Optional[ContactResult] = None
) -> NearestCorrespondence:
    """Pair every object vertex with its nearest hand vertex; reuses the nearest queries of `contact` when given."""
    if contact is not None:
        indices = contact.object_correspondence.nearest
        anchors = contact.hand_correspondence.nearest
    else:
        indices, _ = hand.point_index.query(object_mesh.vertices)
        anchors, _ = object_mesh.point_index.query(hand.vertices)
    hand_inside = dot3(hand.vertices - object_mesh.vertices[anchors], object_mesh.vertex_normals[anchors]) < 0
    return NearestCorrespondence(
        indices=indices,
        interior=hand_inside[indices],
        n_object=object_mesh.n_vertices,
        n_hand=hand.n_vertices,
    )


def _penetration_depths(object_mesh: TriMesh, hand: TriMesh, corr: NearestCorrespondence) -> np.ndarray:
    if corr.n_object != object_mesh.n_vertices or corr.n_hand != hand.n_vertices:
        raise StaleCorrespondence(
            f"Correspondence built for {corr.n_object} object / {corr.n_hand} hand vertices, "
            f"meshes have {object_mesh.n_vertices} / {hand.n_vertices}"
        )
    depth = dot3(object_mesh.vertices - hand.vertices[corr.indices], object_mesh.vertex_normals)
    return np.where(corr.interior, depth, 0.0)


def loss_penetration(
    object_mesh: TriMesh, hand: TriMesh, correspondence: NearestCorrespondence, cfg: LossConfig
) -> float:
    """Penetration depth (mm) beyond c_pen, averaged over object vertices."""
    depth = _penetration_depths(object_mesh, hand, correspondence)
    return float(np.sum(np.maximum(depth - cfg.c_pen, 0.0))) / correspondence.n_object


def penetration_grad(
    object_mesh: TriMesh,
    hand: TriMesh,
    correspondence: NearestCorrespondence,
    vertex_jacobian: np.ndarray,
    cfg: LossConfig,
) -> np.ndarray:
    """dE_pen/dP given the (V_hand, 3, D) Jacobian of every hand vertex."""
    depth = _penetration_depths(object_mesh, hand, correspondence)
    active = depth > cfg.c_pen
    if not np.any(active):
        return np.zeros(vertex_jacobian.shape[-1])
    moving = vertex_jacobian[correspondence.indices[active]]
    return -np.einsum("na,nad->d", object_mesh.vertex_normals[active], moving) / correspondence.n_object


@dataclass(frozen=True)
class LossTerms:
    hand: float
    object: float
    penetration: float
    total: float

    def as_dict(self) -> dict:
        return {"hand": self.hand, "object": self.object, "penetration": self.penetration, "total": self.total}


def total_loss(e_hand: float, e_object: float, e_pen: float, cfg: LossConfig) -> float:
    return e_hand + cfg.lambda_O * e_object + cfg.lambda_pen * e_pen
