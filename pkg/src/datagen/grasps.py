#!/usr/bin/env python3
"""
Procedural grasps of primitive objects by the synthetic hand.

The object is placed in the hand frame just below the palm, in front of the
finger bases. Each digit is then closed joint by joint, proximal first: the
joint flexes in 1 degree steps until the vertices it moves come within c_rad
of the object surface, and the crossing is refined by bisection. Finally the
grasp is moved by a random rotation so the object sits centered on the
origin.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from config import CapsuleConfig
from geometry.mesh import TriMesh
from geometry.primitives import box, cylinder, icosphere
from hand.model import HandModel, HandParams, pose_hand
from hand.synthetic import synthetic_hand

logger = logging.getLogger(__name__)

OBJECT_KINDS = ("sphere", "box", "cylinder")
PALM_CLEARANCE = 1.0
STEP_DEGREES = 1.0
MAX_FLEXION_DEGREES = 110.0
BISECTION_STEPS = 12


@dataclass(frozen=True, eq=False)
class PlacedObject:
    """Object mesh in the hand frame and the point it is centered on."""

    kind: str
    mesh: TriMesh
    center: np.ndarray


def _palm_bottom(model: HandModel) -> float:
    return float(model.rest_mesh.vertices[:, 2].min())


def place_object(kind: str, rng: np.random.Generator, model: Optional[HandModel] = None) -> PlacedObject:
    """Random primitive of `kind` touching nothing, just under the palm."""
    model = model or synthetic_hand()
    top = _palm_bottom(model) - PALM_CLEARANCE
    y = 20.0 + rng.uniform(-5.0, 5.0)
    if kind == "sphere":
        radius = rng.uniform(20.0, 40.0)
        center = np.array([0.0, y, top - radius])
        mesh = icosphere(radius, subdivisions=3, center=center)
    elif kind == "box":
        extents = rng.uniform(30.0, 50.0, size=3)
        center = np.array([0.0, y, top - 0.5 * extents[2]])
        mesh = box(extents, center=center, max_edge=5.0)
    elif kind == "cylinder":
        radius = rng.uniform(15.0, 30.0)
        length = rng.uniform(60.0, 90.0)
        center = np.array([0.0, y, top - radius])
        mesh = cylinder(radius=radius, height=length, axis=(1.0, 0.0, 0.0), center=center)
    else:
        raise ValueError(f"Unknown object kind {kind!r}, expected one of {OBJECT_KINDS}")
    return PlacedObject(kind=kind, mesh=mesh, center=center)


def flexion_column(model: HandModel, joint: int) -> int:
    """Pose coefficient that best matches a pure flexion of `joint`."""
    if model.flexion_axes is None:
        raise ValueError(f"Hand model '{model.name}' has no flexion axes")
    axis = model.flexion_axes[joint]
    response = axis @ model.pose_basis[3 * joint:3 * joint + 3]
    return int(np.argmax(np.abs(response)))


class FingerCloser:
    """Closes every finger chain of a hand around one object."""

    def __init__(self, model: HandModel, object_mesh: TriMesh, capsule: Optional[CapsuleConfig] = None):
        self.logger = logging.getLogger(self.__class__.__name__)
        object_mesh.check_watertight()
        self.model = model
        self.surface = object_mesh.surface
        self.c_rad = (capsule or CapsuleConfig()).c_rad

    def clearance(self, theta: np.ndarray, vertices: np.ndarray) -> float:
        """Smallest signed distance from the given hand vertices to the object (hand frame)."""
        hand, _ = pose_hand(self.model, HandParams(theta=theta))
        return float(self.surface.signed_distance(hand.vertices[vertices]).min())

    def _touching(self, theta: np.ndarray, column: int, angle: float, vertices: np.ndarray) -> bool:
        trial = theta.copy()
        trial[column] = angle
        return self.clearance(trial, vertices) <= self.c_rad

    def close_joint(self, theta: np.ndarray, joint: int, moving: np.ndarray) -> float:
        """Flexion angle (radians) of first contact, or the flexion limit without contact."""
        column = flexion_column(self.model, joint)
        if self._touching(theta, column, 0.0, moving):
            return 0.0
        step = np.deg2rad(STEP_DEGREES)
        limit = np.deg2rad(MAX_FLEXION_DEGREES)
        lo = 0.0
        angle = step
        while angle <= limit + 1e-12:
            if self._touching(theta, column, angle, moving):
                hi = angle
                for _ in range(BISECTION_STEPS):
                    mid = 0.5 * (lo + hi)
                    if self._touching(theta, column, mid, moving):
                        hi = mid
                    else:
                        lo = mid
                return hi
            lo = angle
            angle += step
        self.logger.debug(f"Joint {joint} reached {MAX_FLEXION_DEGREES} degrees without contact")
        return limit

    def close(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = np.zeros(self.model.n_pose) if theta is None else np.array(theta, dtype=np.float64)
        for chain in self.model.finger_chains():
            for k, joint in enumerate(chain):
                moving = self.model.chain_vertices(chain[k:])
                if len(moving) == 0:
                    continue
                theta[flexion_column(self.model, joint)] = self.close_joint(theta, joint, moving)
        return theta


def close_fingers(model: HandModel, object_mesh: TriMesh, capsule: Optional[CapsuleConfig] = None) -> np.ndarray:
    """Pose coefficients of the hand closed around `object_mesh` (both in the hand frame)."""
    return FingerCloser(model, object_mesh, capsule).close()


def synth_grasps(
    n: int,
    seed: int = 0,
    model: Optional[HandModel] = None,
    capsule: Optional[CapsuleConfig] = None,
    kinds: Sequence[str] = OBJECT_KINDS,
) -> List[Tuple[TriMesh, HandParams]]:
    """
    `n` grasps cycling through `kinds`; grasp i draws from default_rng([seed, i]).

    Returns:
        (object mesh centered on the origin, hand parameters) pairs
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    model = model or synthetic_hand()
    grasps = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        placed = place_object(kinds[i % len(kinds)], rng, model)
        theta = close_fingers(model, placed.mesh, capsule)
        rotation = Rotation.random(random_state=rng)
        matrix = rotation.as_matrix()
        translation = -matrix @ placed.center
        world_object = placed.mesh.transformed(matrix, translation)
        params = HandParams(theta=theta, translation=translation, rotation=rotation.as_rotvec())
        grasps.append((world_object, params))
        logger.debug(f"Grasp {i}: {placed.kind}, pose {np.rad2deg(theta).round(1).tolist()} degrees")
    logger.info(f"Synthesized {n} grasps (seed {seed})")
    return grasps
