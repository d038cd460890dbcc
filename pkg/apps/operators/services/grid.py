"""
Regular grids over the bounding box of the ball and fields sampled on them.

The grid is anchored at the box corner c - R(1, ..., 1) with spacing h;
only nodes strictly inside the ball are kept. Two fields can be combined
only when they live on the same layout.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from apps.common.exceptions import LayoutMismatchError, PreconditionError
from apps.geometry.services.ball import BallDomain, BOUNDARY_TOLERANCE

logger = logging.getLogger(__name__)


# Significant digits for every CSV artifact
CSV_FLOAT_FORMAT = '%.17g'


def interior_nodes(domain: BallDomain, h: float) -> np.ndarray:
    """Grid points corner + k h, k >= 0, with |x - c| < R (1 - 1e-12)."""
    corner = domain.center_array - domain.radius
    steps = int(np.floor(domain.diameter / h + BOUNDARY_TOLERANCE))
    axis = np.arange(steps + 1) * h
    mesh = np.meshgrid(*([axis] * domain.dim), indexing='ij')
    points = corner + np.stack(mesh, axis=-1).reshape(-1, domain.dim)
    return points[domain.contains(points, closed=False)]


@dataclass(frozen=True)
class GridLayout:
    domain: BallDomain
    h: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.h > 0:
            raise PreconditionError(f"Grid spacing must be positive, got h={self.h}")
        object.__setattr__(self, 'h', float(self.h))
        nodes = interior_nodes(self.domain, self.h)
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @classmethod
    def build(cls, domain: BallDomain, h: float) -> 'GridLayout':
        layout = cls(domain=domain, h=h)
        logger.debug(f"Grid layout h={layout.h:.6g}: {layout.size} interior nodes")
        return layout

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.dim


@dataclass(frozen=True, eq=False)
class GridField:
    """Values of a function at the interior nodes of a layout."""

    layout: GridLayout
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.layout.size:
            raise LayoutMismatchError(
                f"Field has {values.shape[0]} values but the layout has {self.layout.size} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, layout: GridLayout) -> 'GridField':
        return cls(layout, np.zeros(layout.size))

    @classmethod
    def constant(cls, layout: GridLayout, value: float) -> 'GridField':
        return cls(layout, np.full(layout.size, float(value)))

    @classmethod
    def from_function(cls, layout: GridLayout, func) -> 'GridField':
        """func maps an (N, n) array of nodes to N values."""
        return cls(layout, func(layout.nodes))

    @property
    def sup_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.abs(self.values)))

    def require_layout(self, other: 'GridField | GridLayout') -> None:
        layout = other.layout if isinstance(other, GridField) else other
        if layout != self.layout:
            raise LayoutMismatchError(
                f"Grid layouts differ (h={self.layout.h:.6g} vs h={layout.h:.6g})"
            )

    def _operand(self, other) -> np.ndarray | float:
        if isinstance(other, GridField):
            self.require_layout(other)
            return other.values
        return float(other)

    def __add__(self, other) -> 'GridField':
        return GridField(self.layout, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other) -> 'GridField':
        return GridField(self.layout, self.values - self._operand(other))

    def __mul__(self, other) -> 'GridField':
        return GridField(self.layout, self.values * self._operand(other))

    __rmul__ = __mul__

    def __neg__(self) -> 'GridField':
        return GridField(self.layout, -self.values)

    def to_frame(self, value_name: str = 'value') -> pd.DataFrame:
        columns = [f"x{i + 1}" for i in range(self.layout.dim)]
        frame = pd.DataFrame(self.layout.nodes, columns=columns)
        frame[value_name] = self.values
        return frame

    def to_csv(self, path, value_name: str = 'value') -> None:
        self.to_frame(value_name).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
