"""
Contraction constants of the fixed-point map

    Phi(u) = H(g + V u + b u|u|^(p-1))

on the ball {||u||_inf <= 2 eps / (1 - tau)}:

    tau = l0 ||f||_inf |mu|        (linear part, from the potential)
    K   = l0 p ||b||_inf           (nonlinear part)
    q   = tau + 2^p K eps^(p-1) / (1 - tau)^(p-1)

With eps = eps0 = ((1 - c0)^p / (2^p K))^(1/(p-1)) the condition q < 1 is
equivalent to tau < c0.
"""

import math
import logging
from dataclasses import dataclass

from apps.common.exceptions import NotAContractionError, PreconditionError
from apps.geometry.services.ball import BallDomain
from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.operators.services.grid import GridField
from apps.potentials.services.profiles import BumpProfile

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Deterministic data (p, b, g, f, c0) shared by every realization."""

    p: float
    b: GridField
    g: GridField
    f: BumpProfile
    c0: float = 0.5
    eps: float | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise PreconditionError(f"Exponent p must exceed 1, got p={self.p}")
        if not 0 < self.c0 < 1:
            raise PreconditionError(f"c0 must lie in (0, 1), got c0={self.c0}")
        if self.eps is not None and not self.eps > 0:
            raise PreconditionError(f"eps override must be positive, got eps={self.eps}")
        self.g.require_layout(self.b)

        ceiling = data_ceiling(self.p, self.K, self.domain.l0)
        if not self.g.sup_norm < ceiling:
            raise PreconditionError(
                f"||g||_inf = {self.g.sup_norm:.6g} violates ||g||_inf < (1/l0)(1/(2^p K))^(1/(p-1)) = {ceiling:.6g}"
            )

    @property
    def layout(self):
        return self.g.layout

    @property
    def domain(self) -> BallDomain:
        return self.g.layout.domain

    @property
    def K(self) -> float:
        return self.domain.l0 * self.p * self.b.sup_norm


@dataclass(frozen=True)
class ContractionBudget:
    tau: float
    K: float
    eps: float
    eps0: float
    p: float
    q: float | None

    @property
    def norm_bound(self) -> float:
        """2 eps / (1 - tau); infinite when tau >= 1."""
        if self.tau >= 1:
            return math.inf
        return 2.0 * self.eps / (1.0 - self.tau)

    def to_dict(self) -> dict:
        return {'tau': self.tau, 'K': self.K, 'eps': self.eps, 'eps0': self.eps0, 'q': self.q}


def data_ceiling(p: float, K: float, l0: float) -> float:
    """(1/l0)(1/(2^p K))^(1/(p-1)), the bound on ||g||_inf; infinite for K = 0."""
    if K == 0:
        return math.inf
    return (1.0 / (2.0 ** p * K)) ** (1.0 / (p - 1.0)) / l0


def eps0(p: float, K: float, c0: float) -> float:
    return ((1.0 - c0) ** p / (2.0 ** p * K)) ** (1.0 / (p - 1.0))


def contraction_factor(tau: float, K: float, eps: float, p: float) -> float | None:
    if tau >= 1:
        return None
    return tau + 2.0 ** p * K * eps ** (p - 1.0) / (1.0 - tau) ** (p - 1.0)


def contraction_constants(spec: ProblemSpec, mu: AtomicMeasure, domain: BallDomain) -> ContractionBudget:
    l0 = domain.l0
    tau = l0 * spec.f.sup_norm * total_variation(mu)
    K = l0 * spec.p * spec.b.sup_norm
    if K == 0:
        # No nonlinear term: the smallest eps with ||g||_inf <= eps / l0
        canonical = l0 * spec.g.sup_norm
    else:
        canonical = eps0(spec.p, K, spec.c0)
    eps = spec.eps if spec.eps is not None else canonical
    return ContractionBudget(
        tau=tau,
        K=K,
        eps=eps,
        eps0=canonical,
        p=spec.p,
        q=contraction_factor(tau, K, eps, spec.p),
    )


def is_admissible(budget: ContractionBudget, g_norm: float, l0: float) -> bool:
    """tau < 1, q < 1 and ||g||_inf <= eps / l0."""
    if not budget.tau < 1:
        return False
    # Exact at eps = l0 ||g||
    return budget.q < 1 and l0 * g_norm <= budget.eps


def a_priori_iterations(q: float, first_step: float, tol: float) -> int:
    """Smallest k with q^k first_step / (1 - q) <= tol."""
    if not q < 1:
        raise NotAContractionError(f"Contraction factor must be below 1, got q={q}")
    if q < 0 or first_step < 0 or not tol > 0:
        raise PreconditionError("Need 0 <= q < 1, first_step >= 0 and tol > 0")
    if first_step == 0:
        return 0

    def bound(k: int) -> float:
        return q ** k * first_step / (1.0 - q)

    if q == 0:
        return 0 if bound(0) <= tol else 1

    k = max(0, math.ceil(math.log(tol * (1.0 - q) / first_step) / math.log(q)))
    while k > 0 and bound(k - 1) <= tol:
        k -= 1
    while bound(k) > tol:
        k += 1
    return k


def series_norm_bound(eps: float, tau: float, terms: int) -> float:
    """2 eps sum_{j <= J} tau^j + 2 eps tau^(J+1) / (1 - tau), equal to 2 eps / (1 - tau)."""
    if not 0 <= tau < 1:
        raise PreconditionError(f"Need 0 <= tau < 1, got tau={tau}")
    partial = sum(tau ** j for j in range(terms + 1))
    return 2.0 * eps * partial + 2.0 * eps * tau ** (terms + 1) / (1.0 - tau)


def in_continuity_domain(mu: AtomicMeasure, g_norm: float, f: BumpProfile, p: float, b_norm: float, domain: BallDomain) -> bool:
    """
    Data for which the solution map is Lipschitz:
    |mu| < 1 / (l0 ||f||_inf) and ||g||_inf < (1/l0)(1/(2^p K))^(1/(p-1)).
    """
    l0 = domain.l0
    mass_ok = l0 * f.sup_norm * total_variation(mu) < 1
    return mass_ok and g_norm < data_ceiling(p, l0 * p * b_norm, l0)
