"""
Ball domain U = B(center, R) in R^n, n >= 3.

Houses the geometric constants the fixed-point estimates are built from:
the diameter d_U = 2R and l0 = d_U^2 / (2(n - 2)), which bounds the
integral of the Green function over U.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from apps.common.exceptions import InvalidDimensionError, DomainError

logger = logging.getLogger(__name__)


# Relative tolerance for "on the closed ball"
BOUNDARY_TOLERANCE = 1e-12


def unit_ball_volume(n: int) -> float:
    """
    Volume alpha_n of the unit ball in R^n.

    alpha_n = pi^(n/2) / Gamma(n/2 + 1)
    """
    if int(n) != n or n <= 0:
        raise InvalidDimensionError(f"Dimension must be a positive integer, got {n}")
    return float(math.pi ** (n / 2) / gamma(n / 2 + 1))


@dataclass(frozen=True)
class BallDomain:
    """Bounded domain U as an open ball; points on the sphere belong to its closure."""

    dim: int
    center: tuple
    radius: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 3:
            raise InvalidDimensionError(
                f"The Green bound needs dimension n >= 3, got n={self.dim}"
            )
        center = tuple(float(c) for c in self.center)
        if len(center) != self.dim:
            raise InvalidDimensionError(
                f"Center has {len(center)} coordinates but dim is {self.dim}"
            )
        if not self.radius > 0:
            raise DomainError(f"Radius must be positive, got {self.radius}")
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'center', center)
        object.__setattr__(self, 'radius', float(self.radius))

    @classmethod
    def unit(cls, dim: int = 3, radius: float = 1.0) -> 'BallDomain':
        return cls(dim=dim, center=(0.0,) * dim, radius=radius)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def l0(self) -> float:
        return l0(self)

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius ** self.dim

    def contains(self, points, closed: bool = True) -> np.ndarray:
        """Boolean mask of points (shape (..., n)) lying in U (or its closure)."""
        offsets = np.asarray(points, dtype=float) - self.center_array
        distances = np.linalg.norm(offsets, axis=-1)
        if closed:
            return distances <= self.radius * (1.0 + BOUNDARY_TOLERANCE)
        return distances < self.radius * (1.0 - BOUNDARY_TOLERANCE)

    def require_closed(self, points, label: str = 'point') -> np.ndarray:
        """Return points as an array, raising DomainError if any leaves the closed ball."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise DomainError(
                f"{label} has {points.shape[-1]} coordinates, domain dimension is {self.dim}"
            )
        inside = self.contains(points, closed=True)
        if not np.all(inside):
            raise DomainError(f"{label} lies outside the closed ball of radius {self.radius}")
        return points

    def to_dict(self) -> dict:
        return {'dim': self.dim, 'center': list(self.center), 'radius': self.radius}


def l0(domain: BallDomain) -> float:
    """l0 = d_U^2 / (2(n - 2)) with d_U = 2R."""
    return domain.diameter ** 2 / (2.0 * (domain.dim - 2))
