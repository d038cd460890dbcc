"""
Random potential V(x) = integral of f(x - y) dmu(y) for atomic mu.

For mu = sum_i w_i delta_{eta_i} this is sum_i w_i f(x - eta_i), and
|V(x)| <= ||f||_inf |mu| everywhere.
"""

import logging

import numpy as np

from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.operators.services.grid import GridField, GridLayout
from .profiles import BumpProfile

logger = logging.getLogger(__name__)


# Upper bound on points * atoms handled in one vectorized block
BLOCK_ELEMENTS = 2_000_000


def potential_values(f: BumpProfile, mu: AtomicMeasure, points: np.ndarray) -> np.ndarray:
    """V at each row of `points`, summing atoms in index order."""
    points = np.asarray(points, dtype=float).reshape(-1, mu.dim)
    values = np.zeros(points.shape[0])
    if len(mu) == 0:
        return values

    rows = max(1, BLOCK_ELEMENTS // len(mu))
    for start in range(0, points.shape[0], rows):
        block = points[start:start + rows]
        displacements = block[:, None, :] - mu.locations[None, :, :]
        values[start:start + rows] = f(displacements) @ mu.weights
    return values


def evaluate_potential(f: BumpProfile, mu: AtomicMeasure, x) -> float:
    return float(potential_values(f, mu, np.asarray(x, dtype=float)[None, :])[0])


def potential_field(f: BumpProfile, mu: AtomicMeasure, layout: GridLayout) -> GridField:
    """V sampled at the interior nodes of the layout."""
    return GridField(layout, potential_values(f, mu, layout.nodes))


def potential_sup_bound(f: BumpProfile, mu: AtomicMeasure) -> float:
    """||f||_inf |mu|, the a priori bound on ||V||_inf."""
    return f.sup_norm * total_variation(mu)
