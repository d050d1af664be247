"""Rescaled interaction kernels and the reconstruction weight.

The 2D operator kernel and the 1D contour kernel both use constant
profiles on the unit ball, pinned by their moment conditions: the second
moment of the 2D kernel over B(0, delta) equals the space dimension (2)
and the second moment of the 1D kernel over [-delta, delta] equals 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Profile(Enum):
    CONSTANT = "constant"


#: integral of the unnormalized 1D profile over the real line
C_H = 3.0


@dataclass(frozen=True)
class KernelSet:
    """Kernel pair for one horizon delta.

    ``j_scale`` is an internal fault-injection hook for the verification
    suite; production code leaves it at 1.
    """

    delta: float
    j_profile: Profile = Profile.CONSTANT
    h_profile: Profile = Profile.CONSTANT
    j_scale: float = 1.0

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("horizon delta must be positive")

    @property
    def j_amplitude(self) -> float:
        """Value of the 2D kernel on its support, 4/(pi delta^4)."""
        return self.j_scale * 4.0 / (math.pi * self.delta**4)

    @property
    def h_amplitude(self) -> float:
        """Value of the 1D contour kernel on its support, 3/(2 delta^3)."""
        return 1.5 / self.delta**3


def j_delta(kernels: KernelSet, r):
    """2D operator kernel at radius r; vanishes beyond the horizon."""
    r = np.asarray(r, dtype=float)
    return np.where(r <= kernels.delta, kernels.j_amplitude, 0.0)


def h_delta(kernels: KernelSet, l):
    """1D contour kernel at offset l; vanishes beyond the horizon."""
    l = np.asarray(l, dtype=float)
    return np.where(np.abs(l) <= kernels.delta, kernels.h_amplitude, 0.0)


def gmls_weight(delta: float, r):
    """Reconstruction weight (1 - r/delta)^4 on [0, delta], else 0."""
    r = np.asarray(r, dtype=float)
    w = 1.0 - r / delta
    return np.where(r <= delta, w**4, 0.0)


def truncated_h_amplitude(half_width: float) -> float:
    """1D kernel level with unit second moment on [-half_width, half_width]."""
    if half_width <= 0.0:
        raise ValueError("half_width must be positive")
    return 1.5 / half_width**3
