"""
Finite signed atomic measures mu = sum_i w_i delta_{eta_i} on the closed ball.

A realization mu_omega of a random measure is always represented this way;
the total variation is the sum of absolute weights.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from apps.common.exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    dim: int
    locations: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        locations = np.array(self.locations, dtype=float).reshape(-1, self.dim)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if locations.shape[0] != weights.shape[0]:
            raise DomainError(
                f"Measure has {locations.shape[0]} locations but {weights.shape[0]} weights"
            )
        locations.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'locations', locations)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def empty(cls, dim: int) -> 'AtomicMeasure':
        return cls(dim, np.empty((0, dim)), np.empty(0))

    @classmethod
    def dirac(cls, location, weight: float = 1.0) -> 'AtomicMeasure':
        location = np.asarray(location, dtype=float)
        return cls(location.size, location[None, :], np.array([weight]))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def total_variation(self) -> float:
        return total_variation(self)

    def scaled(self, factor: float) -> 'AtomicMeasure':
        return AtomicMeasure(self.dim, self.locations, factor * self.weights)

    def concatenated(self, other: 'AtomicMeasure') -> 'AtomicMeasure':
        """mu + nu as a plain concatenation of atom lists (atoms are not merged)."""
        return AtomicMeasure(
            self.dim,
            np.vstack([self.locations, other.locations]),
            np.concatenate([self.weights, other.weights]),
        )

    def combined(self) -> 'AtomicMeasure':
        """Same measure with atoms at identical locations merged and zero weights dropped."""
        if len(self) == 0:
            return self
        unique, inverse = np.unique(self.locations, axis=0, return_inverse=True)
        merged = np.zeros(unique.shape[0])
        np.add.at(merged, inverse.reshape(-1), self.weights)
        keep = merged != 0.0
        return AtomicMeasure(self.dim, unique[keep], merged[keep])

    def difference(self, other: 'AtomicMeasure') -> 'AtomicMeasure':
        """mu - nu on the merged atom list."""
        return self.concatenated(other.scaled(-1.0)).combined()

    def validate_support(self, domain) -> None:
        if len(self):
            domain.require_closed(self.locations, label='atom location')

    def to_records(self) -> list:
        return [
            {'location': [float(c) for c in location], 'weight': float(weight)}
            for location, weight in zip(self.locations, self.weights)
        ]

    @classmethod
    def from_records(cls, records: list, dim: int) -> 'AtomicMeasure':
        if not records:
            return cls.empty(dim)
        return cls(
            dim,
            np.array([record['location'] for record in records], dtype=float),
            np.array([record['weight'] for record in records], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_records())


def total_variation(measure: AtomicMeasure) -> float:
    """|mu| = sum_i |w_i|; zero for the empty measure."""
    return float(np.abs(measure.weights).sum())
