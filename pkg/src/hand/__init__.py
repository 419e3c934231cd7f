"""Articulated hand model: parameters, posing, Jacobians and model files."""

from hand.model import HandJacobian, HandModel, HandParams, ParamLayout, PosedHand, pose_hand, pose_jacobian
from hand.rotations import canonicalize_rotation

__all__ = [
    "HandJacobian",
    "HandModel",
    "HandParams",
    "ParamLayout",
    "PosedHand",
    "pose_hand",
    "pose_jacobian",
    "canonicalize_rotation",
]
