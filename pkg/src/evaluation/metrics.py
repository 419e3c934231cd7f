#!/usr/bin/env python3
"""
Grasp quality metrics.

All distances are millimeters and all percentages lie in [0, 100].
"""

import logging
from typing import Optional, Tuple

import numpy as np

from config import MetricsConfig
from contact.capsule import ContactMap
from errors import DimensionMismatch
from geometry.mesh import TriMesh
from geometry.queries import norm3, signed_distance, unsigned_distance
from geometry.voxel import VoxelGrid, intersection_volume

logger = logging.getLogger(__name__)


def mpjpe(pred_joints: np.ndarray, gt_joints: np.ndarray) -> float:
    """Mean per-joint Euclidean error."""
    pred = np.asarray(pred_joints, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_joints, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"Joint sets differ in size: {len(pred)} vs {len(gt)}")
    if len(pred) == 0:
        raise DimensionMismatch("MPJPE needs at least one joint")
    return float(np.mean(norm3(pred - gt)))


def contact_coverage(hand: TriMesh, object_mesh: TriMesh, cfg: MetricsConfig) -> float:
    """Percentage of hand vertices whose signed distance to the object lies in [-band, +band]."""
    if hand.n_vertices == 0:
        return 0.0
    distance = signed_distance(hand.vertices, object_mesh)
    return float(100.0 * np.count_nonzero(np.abs(distance) <= cfg.contact_band) / hand.n_vertices)


def precision_recall(predicted: np.ndarray, actual: np.ndarray) -> Tuple[float, float]:
    """
    Precision and recall (%) of boolean maps.

    With nothing predicted precision is 100; with no actual positives recall is 100.
    """
    predicted = np.asarray(predicted, dtype=bool)
    actual = np.asarray(actual, dtype=bool)
    if predicted.shape != actual.shape:
        raise DimensionMismatch(f"Binary maps differ in size: {predicted.size} vs {actual.size}")
    true_positive = np.count_nonzero(predicted & actual)
    n_predicted = np.count_nonzero(predicted)
    n_actual = np.count_nonzero(actual)
    if n_predicted == 0:
        logger.info("No predicted contact; precision taken as 100")
        precision = 100.0
    else:
        precision = 100.0 * true_positive / n_predicted
    if n_actual == 0:
        logger.info("Ground truth has no contact; recall taken as 100")
        recall = 100.0
    else:
        recall = 100.0 * true_positive / n_actual
    return float(precision), float(recall)


def contact_precision_recall(
    hand: TriMesh, object_mesh: TriMesh, gt_contact: ContactMap, cfg: MetricsConfig
) -> Tuple[float, float]:
    """
    Object vertices within `contact_band` of the hand surface, scored against
    the ground-truth map thresholded at `contact_threshold`.
    """
    if len(gt_contact) != object_mesh.n_vertices:
        raise DimensionMismatch(
            f"Ground-truth map has {len(gt_contact)} values for {object_mesh.n_vertices} object vertices"
        )
    predicted = unsigned_distance(object_mesh.vertices, hand) <= cfg.contact_band
    actual = gt_contact.values >= cfg.contact_threshold
    return precision_recall(predicted, actual)


def penetration_volume(
    hand: TriMesh, object_mesh: TriMesh, cfg: MetricsConfig, object_grid: Optional[VoxelGrid] = None
) -> float:
    """Hand/object intersection volume in cm^3; `object_grid` is a reusable voxelization of the object."""
    return intersection_volume(hand, object_mesh, cfg.voxel_size, b_grid=object_grid)


def histogram_edges(cfg: MetricsConfig) -> np.ndarray:
    n_bins = int(round(2.0 * cfg.histogram_range / cfg.histogram_bin))
    return np.linspace(-cfg.histogram_range, cfg.histogram_range, n_bins + 1)


def distance_histogram(hand: TriMesh, object_mesh: TriMesh, cfg: MetricsConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Counts of hand vertices per signed-distance bin.

    Returns:
        (bin edges, counts); vertices outside the range are not counted
    """
    edges = histogram_edges(cfg)
    counts, _ = np.histogram(signed_distance(hand.vertices, object_mesh), bins=edges)
    return edges, counts
