"""
Lipschitz dependence of the solution on (g, mu).

For two admissible realizations with eta = l0 ||f||_inf max(|mu1|, |mu2|):

    ||u1 - u2||_inf <= l0 (||g1 - g2||_inf + 2 eps0 / (1 - eta) ||f||_inf |mu1 - mu2|)
                       / (1 - eta - 2^p K eps0^(p-1) / (1 - eta)^(p-1))
"""

import math
import logging
from dataclasses import dataclass

from apps.common.exceptions import PreconditionError
from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.operators.services.grid import GridField
from .contraction import ProblemSpec
from .picard import SolveOutcome

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LipschitzGap:
    lhs: float
    rhs: float
    denominator: float

    @property
    def valid(self) -> bool:
        return self.denominator > 0

    def holds(self, slack: float = 0.0) -> bool:
        return self.valid and self.lhs <= self.rhs * (1 + slack)

    def to_dict(self) -> dict:
        return {
            'lhs': self.lhs,
            'rhs': self.rhs if math.isfinite(self.rhs) else None,
            'denominator': self.denominator,
            'valid': self.valid,
        }


def lipschitz_gap(
    out1: SolveOutcome,
    out2: SolveOutcome,
    g1: GridField,
    g2: GridField,
    mu1: AtomicMeasure,
    mu2: AtomicMeasure,
    spec: ProblemSpec,
) -> LipschitzGap:
    if not (out1.admissible and out2.admissible):
        raise PreconditionError("Lipschitz estimate needs two admissible solutions")
    g1.require_layout(g2)
    out1.u.require_layout(out2.u)

    l0 = spec.domain.l0
    f_norm = spec.f.sup_norm
    p = spec.p
    K = out1.budget.K
    eps = max(out1.budget.eps, out2.budget.eps)

    lhs = (out1.u - out2.u).sup_norm
    eta = l0 * f_norm * max(total_variation(mu1), total_variation(mu2))
    if eta >= 1:
        return LipschitzGap(lhs=lhs, rhs=math.inf, denominator=-math.inf)

    denominator = 1.0 - eta - 2.0 ** p * K * eps ** (p - 1.0) / (1.0 - eta) ** (p - 1.0)
    if denominator <= 0:
        return LipschitzGap(lhs=lhs, rhs=math.inf, denominator=denominator)

    mass_gap = total_variation(mu1.difference(mu2))
    numerator = l0 * ((g1 - g2).sup_norm + 2.0 * eps / (1.0 - eta) * f_norm * mass_gap)
    rhs = numerator / denominator
    logger.debug(f"Lipschitz check: lhs={lhs:.3e} rhs={rhs:.3e} denominator={denominator:.4f}")
    return LipschitzGap(lhs=lhs, rhs=rhs, denominator=denominator)
