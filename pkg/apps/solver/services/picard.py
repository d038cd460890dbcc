"""
Picard iteration u_{k+1} = Phi(u_k) for the integral equation

    u = H(g + V u + b u|u|^(p-1)),   V = f * mu.

Stops once ||u_{k+1} - u_k||_inf <= tol (1 - q) / q or the a priori count
is reached, then confirms ||u - Phi(u)||_inf <= tol with one extra Phi.
"""

import math
import logging
from dataclasses import dataclass, field

from apps.common.exceptions import InsufficientHistoryError, NonConvergenceError, PreconditionError
from apps.geometry.services.green import GreenKernel
from apps.measures.services.atomic import AtomicMeasure
from apps.operators.services.grid import GridField
from apps.operators.services.quadrature import QUADRATURE_SLACK, QuadratureRule, compose_rhs
from apps.potentials.services.potential import potential_field
from .contraction import ContractionBudget, ProblemSpec, a_priori_iterations, contraction_constants, is_admissible

logger = logging.getLogger(__name__)


# Gaps below this are treated as exact zeros when estimating the contraction ratio
GAP_FLOOR = 1e-14

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 500


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    admissible: bool
    budget: ContractionBudget
    u: GridField | None = None
    iterations: int = 0
    residual: float | None = None
    gaps: tuple = field(default=(), repr=False)

    @property
    def norm_bound(self) -> float:
        return self.budget.norm_bound

    @property
    def sup_norm(self) -> float | None:
        return self.u.sup_norm if self.u is not None else None

    def to_dict(self) -> dict:
        return {
            'admissible': self.admissible,
            'tau': self.budget.tau,
            'K': self.budget.K,
            'eps0': self.budget.eps0,
            'q': self.budget.q,
            'iterations': self.iterations,
            'residual': self.residual,
            'sup_norm': self.sup_norm,
            'norm_bound': self.norm_bound if math.isfinite(self.norm_bound) else None,
        }


def picard_solve(
    spec: ProblemSpec,
    mu: AtomicMeasure,
    rule: QuadratureRule,
    kernel: GreenKernel,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITERATIONS,
    initial: GridField | None = None,
) -> SolveOutcome:
    if not tol > 0:
        raise PreconditionError(f"Tolerance must be positive, got tol={tol}")
    spec.g.require_layout(rule.layout)

    domain = rule.domain
    budget = contraction_constants(spec, mu, domain)
    if not is_admissible(budget, spec.g.sup_norm, domain.l0):
        logger.debug(f"Inadmissible realization: tau={budget.tau:.6g} q={budget.q}")
        return SolveOutcome(admissible=False, budget=budget)

    V = potential_field(spec.f, mu, rule.layout)

    def phi(u: GridField) -> GridField:
        return compose_rhs(spec.g, spec.b, V, u, spec.p, rule, kernel)

    u = initial if initial is not None else GridField.zeros(rule.layout)
    u.require_layout(rule.layout)
    if u.sup_norm > budget.norm_bound * (1 + QUADRATURE_SLACK):
        raise PreconditionError(
            f"Initial iterate norm {u.sup_norm:.6g} lies outside the contraction ball {budget.norm_bound:.6g}"
        )

    q = budget.q
    threshold = math.inf if q == 0 else tol * (1.0 - q) / q
    gaps = []
    cap = None
    iterations = 0
    image = phi(u)

    while True:
        gap = (image - u).sup_norm
        gaps.append(gap)
        u = image
        iterations += 1
        if cap is None:
            cap = a_priori_iterations(q, gap, tol)
        logger.debug(f"Picard iteration {iterations}: gap={gap:.3e}")

        image = phi(u)
        if gap <= threshold or iterations >= cap:
            residual = (image - u).sup_norm
            if residual <= tol:
                gaps.append(residual)
                break
        if iterations >= max_iter:
            raise NonConvergenceError(
                f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations (q={q:.4f})"
            )

    if u.sup_norm > budget.norm_bound * (1 + QUADRATURE_SLACK):
        logger.warning(
            f"Solution norm {u.sup_norm:.6g} exceeds 2 eps / (1 - tau) = {budget.norm_bound:.6g} beyond slack"
        )
    logger.info(
        f"Picard solve: tau={budget.tau:.4g} q={q:.4g} iterations={iterations} "
        f"residual={residual:.3e} sup_norm={u.sup_norm:.6g}"
    )
    return SolveOutcome(
        admissible=True,
        budget=budget,
        u=u,
        iterations=iterations,
        residual=residual,
        gaps=tuple(gaps),
    )


def observed_contraction(gaps) -> float:
    """Largest ratio of consecutive iterate gaps, ignoring gaps below GAP_FLOOR."""
    gaps = list(gaps)
    if len(gaps) < 2:
        raise InsufficientHistoryError(f"Need at least 3 iterates (2 gaps), got {len(gaps)} gaps")
    ratios = [after / before for before, after in zip(gaps, gaps[1:]) if before > GAP_FLOOR]
    return max(ratios, default=0.0)
