#!/usr/bin/env python3
"""
Pose noise for building refinement datasets.

Draw order per call is fixed: theta, translation, rotation axis, rotation
angle. With every sigma at zero the parameters come back unchanged.
"""

import numpy as np

from config import PerturbConfig
from hand.model import HandParams
from hand.rotations import compose_left, random_axis_rotation


def perturb(params: HandParams, cfg: PerturbConfig, rng: np.random.Generator) -> HandParams:
    """theta += N(0, sigma_theta); t += N(0, sigma_t I); R <- R(axis, N(0, sigma_R)) R."""
    theta = params.theta + rng.normal(0.0, cfg.sigma_theta, size=len(params.theta))
    translation = params.translation + rng.normal(0.0, cfg.sigma_translation, size=3)
    rotation = params.rotation
    if cfg.sigma_rotation > 0:
        rotation = compose_left(random_axis_rotation(cfg.sigma_rotation, rng), params.rotation)
    return params.replace(theta=theta, translation=translation, rotation=rotation)
