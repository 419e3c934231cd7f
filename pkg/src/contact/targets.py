#!/usr/bin/env python3
"""
Target contact maps and per-point features.

Targets come from pluggable sources: a ground-truth file, the contact model
applied at a reference pose, maps produced elsewhere (for example by a
learned predictor trained on the exported features), or an object map alone.
Features describe each sampled object point and each hand vertex relative to
the opposing mesh; quantized contact maps give the matching class labels.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from config import CapsuleConfig
from contact.capsule import ContactMap, contact_maps
from contact.io import load_contact_maps
from errors import ConfigError, DimensionMismatch, FileFormatError
from geometry.mesh import TriMesh
from geometry.queries import dot3
from hand.model import HandModel, HandParams, pose_hand
from hand.model_io import load_params

logger = logging.getLogger(__name__)

DEFAULT_OBJECT_SAMPLES = 2048
FEATURE_COLUMNS = ("x", "y", "z", "distance", "normal_dot", "offset_dot", "is_hand", "source_index")


@dataclass(frozen=True)
class GroundTruthFile:
    """Contact map file holding an object map and optionally a hand map."""

    path: Path


@dataclass(frozen=True, eq=False)
class FromReferencePose:
    """Targets are the contact maps of the hand at `params`."""

    params: HandParams


@dataclass(frozen=True, eq=False)
class PrecomputedMaps:
    hand_map: ContactMap
    object_map: ContactMap


@dataclass(frozen=True, eq=False)
class ObjectOnly:
    """Object target only; the hand contact term is dropped."""

    object_map: ContactMap


TargetSource = Union[GroundTruthFile, FromReferencePose, PrecomputedMaps, ObjectOnly]


@dataclass(frozen=True, eq=False)
class ResolvedTargets:
    object_map: ContactMap
    hand_map: Optional[ContactMap] = None

    def subset_object(self, indices: np.ndarray) -> "ResolvedTargets":
        return ResolvedTargets(object_map=self.object_map.subset(indices), hand_map=self.hand_map)


def parse_target_spec(spec: str) -> TargetSource:
    """
    Turn a CLI target flag into a source.

    Accepted forms: `file:PATH`, `reference:PATH` (hand parameter JSON),
    `object-only:PATH` and `precomputed:PATH` (file holding both maps).
    """
    kind, sep, value = spec.partition(":")
    if not sep or not value:
        raise ConfigError(f"Target spec must look like KIND:PATH, got {spec!r}")
    path = Path(value)
    if kind == "file":
        return GroundTruthFile(path=path)
    if kind == "reference":
        return FromReferencePose(params=load_params(path))
    if kind == "object-only":
        maps = load_contact_maps(path)
        if "object" not in maps:
            raise FileFormatError("object-only target file has no object map", path=str(path))
        return ObjectOnly(object_map=maps["object"])
    if kind == "precomputed":
        maps = load_contact_maps(path)
        if set(maps) != {"object", "hand"}:
            raise FileFormatError("precomputed target file needs both hand and object maps", path=str(path))
        return PrecomputedMaps(hand_map=maps["hand"], object_map=maps["object"])
    raise ConfigError(f"Unknown target kind {kind!r} (file, reference, object-only, precomputed)")


def resolve_targets(
    source: TargetSource,
    object_mesh: TriMesh,
    hand_model: HandModel,
    capsule: Optional[CapsuleConfig] = None,
) -> ResolvedTargets:
    """
    Target maps for the optimizer.

    Raises:
        FileFormatError: unreadable ground-truth file or one without an object map
        DimensionMismatch: maps whose length differs from their mesh
    """
    capsule = capsule or CapsuleConfig()
    if isinstance(source, FromReferencePose):
        hand, _ = pose_hand(hand_model, source.params)
        result = contact_maps(object_mesh, hand, capsule)
        targets = ResolvedTargets(object_map=result.object_map, hand_map=result.hand_map)
    elif isinstance(source, GroundTruthFile):
        maps = load_contact_maps(source.path)
        if "object" not in maps:
            raise FileFormatError("Ground-truth contact file has no object map", path=str(source.path))
        targets = ResolvedTargets(object_map=maps["object"], hand_map=maps.get("hand"))
    elif isinstance(source, PrecomputedMaps):
        targets = ResolvedTargets(object_map=source.object_map, hand_map=source.hand_map)
    elif isinstance(source, ObjectOnly):
        targets = ResolvedTargets(object_map=source.object_map)
    else:
        raise ConfigError(f"Unknown target source {type(source).__name__}")

    if len(targets.object_map) != object_mesh.n_vertices:
        raise DimensionMismatch(
            f"Object target has {len(targets.object_map)} values for {object_mesh.n_vertices} object vertices"
        )
    if targets.hand_map is not None and len(targets.hand_map) != hand_model.n_vertices:
        raise DimensionMismatch(
            f"Hand target has {len(targets.hand_map)} values for {hand_model.n_vertices} hand vertices"
        )
    logger.info(
        f"Resolved {type(source).__name__} targets (hand target {'absent' if targets.hand_map is None else 'present'})"
    )
    return targets


@dataclass(frozen=True, eq=False)
class PointFeatures:
    """
    Per-point features of sampled object points followed by every hand vertex.

    distance: to the nearest vertex of the opposing mesh (mm)
    normal_dot: own normal . normal of that nearest vertex
    offset_dot: own normal . unit direction towards it (0 when touching)
    is_hand: 0 for object points, 1 for hand vertices
    """

    points: np.ndarray
    distance: np.ndarray
    normal_dot: np.ndarray
    offset_dot: np.ndarray
    is_hand: np.ndarray
    source_index: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "x": self.points[:, 0],
                "y": self.points[:, 1],
                "z": self.points[:, 2],
                "distance": self.distance,
                "normal_dot": self.normal_dot,
                "offset_dot": self.offset_dot,
                "is_hand": self.is_hand,
                "source_index": self.source_index,
            },
            columns=list(FEATURE_COLUMNS),
        )


def sample_object_vertices(n_vertices: int, n_samples: int, seed: int = 0) -> np.ndarray:
    """Seeded vertex indices; draws with replacement only when more samples than vertices are asked for."""
    rng = np.random.default_rng(seed)
    return rng.choice(n_vertices, size=n_samples, replace=n_samples > n_vertices)


def _side_features(points: np.ndarray, normals: np.ndarray, opposing: TriMesh):
    nearest, distance = opposing.point_index.query(points)
    normal_dot = dot3(normals, opposing.vertex_normals[nearest])
    direction = opposing.vertices[nearest] - points
    safe = np.where(distance > 0, distance, 1.0)
    offset_dot = np.where(distance > 0, dot3(normals, direction) / safe, 0.0)
    return distance, normal_dot, offset_dot


def extract_features(
    object_mesh: TriMesh,
    hand: TriMesh,
    n_object_samples: int = DEFAULT_OBJECT_SAMPLES,
    seed: int = 0,
) -> PointFeatures:
    """Features for `n_object_samples` seeded object vertices and all hand vertices."""
    if n_object_samples < 1:
        raise ValueError(f"n_object_samples must be >= 1, got {n_object_samples}")
    sampled = sample_object_vertices(object_mesh.n_vertices, n_object_samples, seed)
    obj_points, obj_normals = object_mesh.submesh_vertices(sampled)
    obj = _side_features(obj_points, obj_normals, hand)
    hnd = _side_features(hand.vertices, hand.vertex_normals, object_mesh)
    return PointFeatures(
        points=np.vstack([obj_points, hand.vertices]),
        distance=np.concatenate([obj[0], hnd[0]]),
        normal_dot=np.concatenate([obj[1], hnd[1]]),
        offset_dot=np.concatenate([obj[2], hnd[2]]),
        is_hand=np.concatenate([np.zeros(len(sampled), dtype=np.int8), np.ones(hand.n_vertices, dtype=np.int8)]),
        source_index=np.concatenate([sampled, np.arange(hand.n_vertices)]).astype(np.int64),
    )


def quantize_contact(contact: Union[ContactMap, np.ndarray], n_bins: int = 10) -> np.ndarray:
    """Uniform bins over [0, 1]; a value of exactly 1 goes to the last bin."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    values = contact.values if isinstance(contact, ContactMap) else np.asarray(contact, dtype=np.float64)
    return np.minimum(np.floor(values * n_bins).astype(np.int64), n_bins - 1)


def dequantize_contact(bins: np.ndarray, n_bins: int = 10) -> np.ndarray:
    """Bin centers."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    return (np.asarray(bins, dtype=np.float64) + 0.5) / n_bins
