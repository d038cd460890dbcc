"""
Dirichlet Green function of -Laplace on a ball, by the method of images.

    G(x, y) = c_n ( |x - y|^(2-n) - (|x'|^2 |y'|^2 / R^2 - 2 x'.y' + R^2)^((2-n)/2) )

with x' = x - c, y' = y - c and c_n = 1 / (n alpha_n (n - 2)). The second
term is the image charge written symmetrically in x and y; it equals
(|y'| |x - y*| / R)^(2-n) for y* = c + R^2 y' / |y'|^2 and stays finite at y = c.

Satisfies 0 <= G(x, y) <= c_n |x - y|^(2-n).
"""

import logging
from dataclasses import dataclass

import numpy as np

from apps.common.exceptions import SingularityError
from .ball import BallDomain, unit_ball_volume

logger = logging.getLogger(__name__)


# |x - y| below COINCIDENCE * R counts as x = y
COINCIDENCE = 1e-12


def normalization(n: int) -> float:
    """c_n = 1 / (n alpha_n (n - 2))."""
    return 1.0 / (n * unit_ball_volume(n) * (n - 2))


@dataclass(frozen=True)
class GreenKernel:
    domain: BallDomain

    @property
    def normalization(self) -> float:
        return normalization(self.domain.dim)

    def __call__(self, x, y) -> float:
        return green_eval(self, x, y)


def kernel_upper_bound(n: int, x, y) -> float:
    """Free-space bound c_n |x - y|^(2-n) from the Green estimate."""
    distance = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if distance < COINCIDENCE:
        raise SingularityError(f"Kernel bound is singular at coincident points (|x-y|={distance:.3e})")
    try:
        return normalization(n) * distance ** (2 - n)
    except OverflowError:
        raise SingularityError(f"Kernel bound overflows at |x-y|={distance:.3e} in dimension {n}")


def green_eval(kernel: GreenKernel, x, y) -> float:
    """Evaluate G(x, y) for x, y in the closed ball, x != y."""
    domain = kernel.domain
    x = domain.require_closed(x, label='x')
    y = domain.require_closed(y, label='y')

    distance = float(np.linalg.norm(x - y))
    if distance < COINCIDENCE * domain.radius:
        raise SingularityError(f"Green function evaluated at coincident points (|x-y|={distance:.3e})")

    value = green_matrix(kernel, x[None, :], y[None, :])[0, 0]
    return float(value)


def green_matrix(kernel: GreenKernel, targets: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """
    Dense block G(targets_i, sources_j).

    Coincident pairs (|x - y| < COINCIDENCE * R) are set to 0; callers that
    integrate against G add the singular self-contribution themselves.
    """
    domain = kernel.domain
    n = domain.dim
    radius = domain.radius
    center = domain.center_array

    xs = np.asarray(targets, dtype=float) - center
    ys = np.asarray(sources, dtype=float) - center

    diff = xs[:, None, :] - ys[None, :, :]
    distance_sq = np.einsum('ijk,ijk->ij', diff, diff)

    x_sq = np.einsum('ij,ij->i', xs, xs)
    y_sq = np.einsum('ij,ij->i', ys, ys)
    image_sq = np.outer(x_sq, y_sq) / radius ** 2 - 2.0 * (xs @ ys.T) + radius ** 2
    # Equals |x - y|^2 on the sphere; clip round-off below it
    image_sq = np.maximum(image_sq, distance_sq)

    coincident = distance_sq < (COINCIDENCE * radius) ** 2
    exponent = (2 - n) / 2.0
    direct = np.where(coincident, 1.0, distance_sq) ** exponent
    image = np.where(coincident, 1.0, image_sq) ** exponent
    values = np.where(coincident, 0.0, kernel.normalization * (direct - image))
    return np.maximum(values, 0.0)
