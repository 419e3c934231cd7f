#!/usr/bin/env python3
"""
Axis-angle helpers.

Conversions go through scipy's Rotation; the derivative pieces (skew
matrices, the SO(3) right Jacobian) are written out because the analytic
hand Jacobians need them batched.
"""

import numpy as np
from scipy.spatial.transform import Rotation

_SMALL_ANGLE = 1e-6


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrices [v]x for (..., 3) vectors."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _writable(rotvec: np.ndarray) -> np.ndarray:
    # Rotation.from_rotvec rejects read-only buffers (frozen HandParams arrays)
    return np.array(rotvec, dtype=np.float64, copy=True)


def rotvec_to_matrix(rotvec: np.ndarray) -> np.ndarray:
    """(..., 3) axis-angle vectors to (..., 3, 3) rotation matrices."""
    rotvec = _writable(rotvec)
    flat = rotvec.reshape(-1, 3)
    return Rotation.from_rotvec(flat).as_matrix().reshape(rotvec.shape[:-1] + (3, 3))


def right_jacobian(rotvec: np.ndarray) -> np.ndarray:
    """
    SO(3) right Jacobian: R(a + da) ~= R(a) Exp(Jr(a) da).

    Uses the second-order Taylor expansion below 1e-6 rad.
    """
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec, axis=-1)[..., None, None]
    k = skew(rotvec)
    k2 = k @ k
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    c1 = np.where(small, 0.5 - theta ** 2 / 24.0, (1.0 - np.cos(safe)) / safe ** 2)
    c2 = np.where(small, 1.0 / 6.0 - theta ** 2 / 120.0, (safe - np.sin(safe)) / safe ** 3)
    return np.eye(3) - c1 * k + c2 * k2


def canonicalize_rotation(rotation: np.ndarray) -> np.ndarray:
    """Equivalent axis-angle vector with magnitude in [0, pi]."""
    rotation = _writable(rotation)
    if not np.any(rotation):
        return np.zeros(3)
    return Rotation.from_rotvec(rotation).as_rotvec()


def compose_left(left: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Axis-angle of R(left) @ R(rotation)."""
    return (Rotation.from_rotvec(_writable(left)) * Rotation.from_rotvec(_writable(rotation))).as_rotvec()


def random_axis_rotation(sigma_degrees: float, rng: np.random.Generator) -> np.ndarray:
    """Axis-angle with a uniformly random unit axis and an N(0, sigma) angle."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.normal(0.0, sigma_degrees))
    return axis * angle
