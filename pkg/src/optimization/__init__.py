"""Contact losses, ADAM and the restart loop."""

from optimization.adam import AdamState, adam_step
from optimization.gradcheck import GradientCheck, finite_difference
from optimization.losses import (
    LossTerms,
    loss_hand,
    loss_object,
    loss_penetration,
    nearest_hand_vertices,
    total_loss,
)
from optimization.optimizer import ContactObjective, OptimResult, optimize, restart_initialization

__all__ = [
    "AdamState",
    "adam_step",
    "GradientCheck",
    "finite_difference",
    "LossTerms",
    "loss_hand",
    "loss_object",
    "loss_penetration",
    "nearest_hand_vertices",
    "total_loss",
    "ContactObjective",
    "OptimResult",
    "optimize",
    "restart_initialization",
]
