#!/usr/bin/env python3
"""
Central finite differences for checking analytic gradients.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GradientCheck:
    """
    numeric: central differences
    smooth: coordinates whose forward and backward one-sided differences agree,
        i.e. no kink or correspondence switch inside the step
    """

    numeric: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    smooth: np.ndarray

    def relative_error(self, analytic: np.ndarray, floor: float = 1e-4) -> float:
        """max |a - n| / max(|a|, |n|, floor) over the smooth coordinates."""
        analytic = np.asarray(analytic, dtype=np.float64)
        if not np.any(self.smooth):
            return 0.0
        a = analytic[self.smooth]
        n = self.numeric[self.smooth]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        return float(np.max(np.abs(a - n) / scale))


def finite_difference(
    func: Callable[[np.ndarray], float], x0: np.ndarray, eps: float = 1e-6, kink_tol: float = 1e-3
) -> GradientCheck:
    x0 = np.asarray(x0, dtype=np.float64)
    n = len(x0)
    f0 = func(x0)
    forward = np.zeros(n)
    backward = np.zeros(n)
    for j in range(n):
        x = x0.copy()
        x[j] = x0[j] + eps
        fplus = func(x)
        x[j] = x0[j] - eps
        fminus = func(x)
        forward[j] = (fplus - f0) / eps
        backward[j] = (f0 - fminus) / eps

    numeric = 0.5 * (forward + backward)
    scale = np.maximum(np.maximum(np.abs(forward), np.abs(backward)), 1e-4)
    smooth = np.abs(forward - backward) / scale <= kink_tol
    if not np.all(smooth):
        logger.debug(f"Finite differences: {int(np.sum(~smooth))} of {n} coordinates straddle a kink")
    return GradientCheck(numeric=numeric, forward=forward, backward=backward, smooth=smooth)
