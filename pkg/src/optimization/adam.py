#!/usr/bin/env python3
"""
ADAM over a flat parameter vector.

Gradients are multiplied by a per-coordinate `grad_scale` before the moment
updates; the bias-corrected step is multiplied by a per-coordinate
`lr_scale`.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import OptimConfig


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


def adam_step(
    params: np.ndarray,
    state: AdamState,
    gradient: np.ndarray,
    cfg: OptimConfig,
    grad_scale: Optional[np.ndarray] = None,
    lr_scale: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update; returns new params and state, inputs untouched."""
    g = np.asarray(gradient, dtype=np.float64)
    if grad_scale is not None:
        g = g * grad_scale
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * g
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * (g * g)
    m_hat = m / (1.0 - cfg.adam_beta1 ** t)
    v_hat = v / (1.0 - cfg.adam_beta2 ** t)
    step = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    if lr_scale is not None:
        step = step * lr_scale
    return params - step, AdamState(m=m, v=v, t=t)
