"""
Ensemble configuration: a random measure model plus the deterministic
problem data, grid and seeding shared by every sample.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

from apps.common.exceptions import PreconditionError
from apps.geometry.services.ball import BallDomain
from apps.geometry.services.green import GreenKernel
from apps.operators.services.grid import GridField, GridLayout
from apps.operators.services.quadrature import QuadratureRule, build_rule
from apps.potentials.services.profiles import BumpProfile
from apps.solver.services.contraction import ProblemSpec
from apps.solver.services.picard import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE

logger = logging.getLogger(__name__)


FIELD_KINDS = ('constant', 'bump')


@dataclass(frozen=True)
class FieldSpec:
    """
    Deterministic coefficient or source field.

        constant  value everywhere
        bump      value * max(0, 1 - |x - center| / radius), centered on the ball by default
    """

    kind: str = 'constant'
    value: float = 0.0
    center: tuple | None = None
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise PreconditionError(f"Unknown field kind '{self.kind}' (expected one of {', '.join(FIELD_KINDS)})")
        if self.kind == 'bump' and not self.radius > 0:
            raise PreconditionError(f"bump field needs a positive radius, got {self.radius}")
        if self.center is not None:
            object.__setattr__(self, 'center', tuple(float(c) for c in self.center))

    @property
    def sup_bound(self) -> float:
        return abs(self.value)

    def build(self, layout: GridLayout) -> GridField:
        if self.kind == 'constant':
            return GridField.constant(layout, self.value)
        center = np.asarray(self.center if self.center is not None else layout.domain.center, dtype=float)
        distances = np.linalg.norm(layout.nodes - center, axis=1)
        return GridField(layout, self.value * np.maximum(0.0, 1.0 - distances / self.radius))

    def to_dict(self) -> dict:
        if self.kind == 'constant':
            return {'kind': self.kind, 'value': self.value}
        return {
            'kind': self.kind,
            'value': self.value,
            'center': list(self.center) if self.center is not None else None,
            'radius': self.radius,
        }


@lru_cache(maxsize=8)
def shared_rule(domain: BallDomain, h: float) -> QuadratureRule:
    """One quadrature rule (and cached kernel matrix) per (domain, h)."""
    return build_rule(domain, h)


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    model: object
    domain: BallDomain
    h: float
    p: float = 2.0
    b: FieldSpec = FieldSpec('constant', 0.1)
    g: FieldSpec = FieldSpec('constant', 0.05)
    f: BumpProfile = BumpProfile('tent', 1.0, 0.5)
    c0: float = 0.5
    eps: float | None = None
    n_samples: int = 1
    seed: int = 0
    threads: int = 1
    tol: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise PreconditionError(f"Sample count must be a positive integer, got {self.n_samples}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise PreconditionError(f"Thread count must be a positive integer, got {self.threads}")
        if not self.h > 0:
            raise PreconditionError(f"Grid spacing must be positive, got h={self.h}")
        if not self.tol > 0 or self.max_iter < 1:
            raise PreconditionError("Need tol > 0 and max_iter >= 1")

    @cached_property
    def rule(self) -> QuadratureRule:
        return shared_rule(self.domain, float(self.h))

    @cached_property
    def kernel(self) -> GreenKernel:
        return GreenKernel(self.domain)

    @cached_property
    def spec(self) -> ProblemSpec:
        layout = self.rule.layout
        return ProblemSpec(
            p=self.p,
            b=self.b.build(layout),
            g=self.g.build(layout),
            f=self.f,
            c0=self.c0,
            eps=self.eps,
        )

    @property
    def l0(self) -> float:
        return self.domain.l0

    def problem_key(self) -> tuple:
        """Everything but the measure model, seeding and scheduling."""
        return (self.domain, float(self.h), self.p, self.b, self.g, self.f, self.c0, self.eps, self.tol, self.max_iter)

    def replace(self, **changes) -> 'EnsembleConfig':
        return replace(self, **changes)

    def warm(self) -> None:
        """Build the rule, spec and kernel matrix before worker threads share them."""
        spec = self.spec
        if self.rule.cached:
            self.rule.matrix(self.kernel)
        logger.debug(f"Ensemble config ready: {self.rule.node_count} nodes, K={spec.K:.4g}")

    def to_dict(self) -> dict:
        return {
            'model': self.model.to_dict(),
            'domain': self.domain.to_dict(),
            'h': self.h,
            'p': self.p,
            'b': self.b.to_dict(),
            'g': self.g.to_dict(),
            'f': self.f.to_dict(),
            'c0': self.c0,
            'eps': self.eps,
            'n_samples': self.n_samples,
            'seed': self.seed,
            'threads': self.threads,
            'tol': self.tol,
            'max_iter': self.max_iter,
        }
