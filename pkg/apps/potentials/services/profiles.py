"""
Bump profiles f in BC(R^n) that smear the atoms of a random measure.

All three families peak at the origin with value A, so ||f||_inf = |A|
is known exactly and never estimated on a grid.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from apps.common.exceptions import PreconditionError

logger = logging.getLogger(__name__)


PROFILE_FAMILIES = ('tent', 'truncated_gaussian', 'constant')


@dataclass(frozen=True)
class BumpProfile:
    """
    family:
        tent                A max(0, 1 - |z|/r)
        truncated_gaussian  A (e^(-|z|^2/2s^2) - e^(-r^2/2s^2)) / (1 - e^(-r^2/2s^2)) for |z| < r, else 0
        constant            A
    """

    family: str
    amplitude: float = 1.0
    radius: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.family not in PROFILE_FAMILIES:
            raise PreconditionError(
                f"Unknown profile family '{self.family}' (expected one of {', '.join(PROFILE_FAMILIES)})"
            )
        if not math.isfinite(self.amplitude):
            raise PreconditionError(f"Profile amplitude must be finite, got {self.amplitude}")
        if self.family != 'constant' and not self.radius > 0:
            raise PreconditionError(f"{self.family} profile needs a positive radius, got {self.radius}")
        if self.family == 'truncated_gaussian' and not self.width > 0:
            raise PreconditionError(f"truncated_gaussian profile needs a positive width, got {self.width}")

    @classmethod
    def tent(cls, amplitude: float = 1.0, radius: float = 1.0) -> 'BumpProfile':
        return cls('tent', amplitude=float(amplitude), radius=float(radius))

    @classmethod
    def truncated_gaussian(cls, amplitude: float = 1.0, width: float = 1.0, radius: float = 1.0) -> 'BumpProfile':
        return cls('truncated_gaussian', amplitude=float(amplitude), width=float(width), radius=float(radius))

    @classmethod
    def constant(cls, amplitude: float = 1.0) -> 'BumpProfile':
        return cls('constant', amplitude=float(amplitude))

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def radial(self, distance) -> np.ndarray:
        """Profile value as a function of |z|."""
        rho = np.asarray(distance, dtype=float)
        if self.family == 'constant':
            return np.full(rho.shape, self.amplitude)
        if self.family == 'tent':
            return self.amplitude * np.maximum(0.0, 1.0 - rho / self.radius)

        floor = math.exp(-self.radius ** 2 / (2.0 * self.width ** 2))
        bell = np.exp(-rho ** 2 / (2.0 * self.width ** 2))
        values = self.amplitude * (bell - floor) / (1.0 - floor)
        return np.where(rho < self.radius, values, 0.0)

    def __call__(self, displacements) -> np.ndarray:
        """f(z) for displacement vectors z stacked along the last axis."""
        z = np.asarray(displacements, dtype=float)
        return self.radial(np.linalg.norm(z, axis=-1))

    def to_dict(self) -> dict:
        if self.family == 'constant':
            return {'family': self.family, 'amplitude': self.amplitude}
        if self.family == 'tent':
            return {'family': self.family, 'amplitude': self.amplitude, 'radius': self.radius}
        return {'family': self.family, 'amplitude': self.amplitude, 'width': self.width, 'radius': self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> 'BumpProfile':
        return cls(**{key: (value if key == 'family' else float(value)) for key, value in data.items()})
