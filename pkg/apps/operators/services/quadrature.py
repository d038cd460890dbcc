"""
Midpoint quadrature for H(phi)(x) = integral over U of G(x, y) phi(y) dy.

Off-diagonal cells contribute G(x_i, x_j) h^n phi(x_j). The diagonal cell
is replaced by the exact integral of the bounding kernel c_n |z|^(2-n)
over the ball of equal volume,

    w_self = c_n n alpha_n r_h^2 / 2,   r_h = (h^n / alpha_n)^(1/n),

which is the computation behind the bound integral of G(x, .) <= l0.
"""

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from apps.common.exceptions import EmptyRuleError, LayoutMismatchError, PreconditionError
from apps.geometry.services.ball import BallDomain, unit_ball_volume
from apps.geometry.services.green import GreenKernel, green_matrix
from .grid import GridField, GridLayout

logger = logging.getLogger(__name__)


# Relative slack allowed whenever a continuum inequality is checked on the grid
QUADRATURE_SLACK = 0.05

# Upper bound on rows * sources * dim handled by one green_matrix call
BLOCK_ELEMENTS = 3_000_000


def self_weight(dim: int, h: float) -> float:
    alpha = unit_ball_volume(dim)
    radius = (h ** dim / alpha) ** (1.0 / dim)
    c_n = 1.0 / (dim * alpha * (dim - 2))
    return c_n * dim * alpha * radius ** 2 / 2.0


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    layout: GridLayout
    cell_volume: float
    self_weight: float
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def domain(self) -> BallDomain:
        return self.layout.domain

    @property
    def nodes(self) -> np.ndarray:
        return self.layout.nodes

    @property
    def node_count(self) -> int:
        return self.layout.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.node_count, self.cell_volume)

    @property
    def cached(self) -> bool:
        return self.node_count <= settings.LAB_KERNEL_CACHE_MAX_NODES

    def require_kernel(self, kernel: GreenKernel) -> None:
        if kernel.domain != self.domain:
            raise LayoutMismatchError("Kernel and quadrature rule are built on different domains")

    def row_blocks(self):
        rows = max(1, BLOCK_ELEMENTS // (self.node_count * self.layout.dim))
        for start in range(0, self.node_count, rows):
            yield start, min(start + rows, self.node_count)

    def kernel_rows(self, kernel: GreenKernel, start: int, stop: int) -> np.ndarray:
        """Weighted kernel rows W[i, j] = G(x_i, x_j) h^n, W[i, i] = w_self."""
        block = green_matrix(kernel, self.nodes[start:stop], self.nodes) * self.cell_volume
        rows = np.arange(start, stop)
        block[rows - start, rows] = self.self_weight
        return block

    def matrix(self, kernel: GreenKernel) -> np.ndarray:
        """Full weighted kernel matrix, cached on the rule."""
        self.require_kernel(kernel)
        with self._lock:
            if 'matrix' not in self._cache:
                logger.debug(f"Assembling {self.node_count}x{self.node_count} kernel matrix")
                full = np.vstack([self.kernel_rows(kernel, start, stop) for start, stop in self.row_blocks()])
                full.setflags(write=False)
                self._cache['matrix'] = full
            return self._cache['matrix']

    def apply(self, kernel: GreenKernel, values: np.ndarray) -> np.ndarray:
        if self.cached:
            return self.matrix(kernel) @ values
        self.require_kernel(kernel)
        out = np.empty(self.node_count)
        for start, stop in self.row_blocks():
            out[start:stop] = self.kernel_rows(kernel, start, stop) @ values
        return out


def build_rule(domain: BallDomain, h: float) -> QuadratureRule:
    if not h > 0:
        raise PreconditionError(f"Grid spacing must be positive, got h={h}")
    layout = GridLayout.build(domain, h)
    if layout.size == 0:
        raise EmptyRuleError(
            f"No grid node lies strictly inside the ball (R={domain.radius}, h={h}); refine the grid"
        )
    rule = QuadratureRule(
        layout=layout,
        cell_volume=float(h) ** domain.dim,
        self_weight=self_weight(domain.dim, float(h)),
    )
    logger.info(f"Quadrature rule n={domain.dim} R={domain.radius} h={h:.6g}: {rule.node_count} nodes")
    return rule


def apply_H(phi: GridField, rule: QuadratureRule, kernel: GreenKernel) -> GridField:
    """Discrete H(phi) on the rule's nodes."""
    phi.require_layout(rule.layout)
    return GridField(rule.layout, rule.apply(kernel, phi.values))


def nonlinear_term(u: GridField, p: float) -> GridField:
    """u |u|^(p-1) written as sign(u) |u|^p (0 at u = 0)."""
    return GridField(u.layout, np.sign(u.values) * np.abs(u.values) ** p)


def compose_rhs(
    g: GridField,
    b: GridField,
    V: GridField,
    u: GridField,
    p: float,
    rule: QuadratureRule,
    kernel: GreenKernel,
) -> GridField:
    """Phi(u) = H(g + V u + b u|u|^(p-1)) in one kernel pass."""
    if not p > 1:
        raise PreconditionError(f"Exponent p must exceed 1, got p={p}")
    for other in (b, V, u):
        g.require_layout(other)
    integrand = g + V * u + b * nonlinear_term(u, p)
    return apply_H(integrand, rule, kernel)


def torsion_solution(layout: GridLayout) -> GridField:
    """w = (R^2 - |x - c|^2) / (2n), the solution of -Laplace w = 1, w = 0 on the sphere."""
    domain = layout.domain
    offsets = layout.nodes - domain.center_array
    values = (domain.radius ** 2 - np.einsum('ij,ij->i', offsets, offsets)) / (2.0 * domain.dim)
    return GridField(layout, values)


def torsion_error(rule: QuadratureRule, kernel: GreenKernel) -> float:
    """Sup relative error ||H(1) - w||_inf / ||w||_inf of the discrete operator."""
    exact = torsion_solution(rule.layout)
    approx = apply_H(GridField.constant(rule.layout, 1.0), rule, kernel)
    return (approx - exact).sup_norm / exact.sup_norm
