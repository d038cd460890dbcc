"""
Ensemble statistics: probability of the admissible set and moment bounds.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from apps.common.exceptions import HypothesisViolationError, PreconditionError
from apps.measures.services.atomic import AtomicMeasure
from apps.measures.services.samplers import tv_probability_below
from apps.solver.services.contraction import contraction_constants
from .runner import EnsembleReport

logger = logging.getLogger(__name__)


CONFIDENCE_LEVEL = 0.95

# Negative-binomial series: stop once a term is below this and terms are shrinking
SERIES_TERM_FLOOR = 1e-12
SERIES_MAX_TERMS = 100_000


@dataclass(frozen=True)
class AdmissibleProbability:
    p_hat: float
    ci_low: float
    ci_high: float
    admissible: int
    n: int
    reference_c0: float | None
    reference_one: float | None

    def to_dict(self) -> dict:
        return {
            'p_hat': self.p_hat,
            'ci95': [self.ci_low, self.ci_high],
            'admissible': self.admissible,
            'n_samples': self.n,
            'nu_below_c0_threshold': self.reference_c0,
            'nu_below_unit_threshold': self.reference_one,
        }


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE_LEVEL) -> tuple:
    interval = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method='wilson')
    return float(interval.low), float(interval.high)


def admissible_probability(report: EnsembleReport) -> AdmissibleProbability:
    """
    Fraction of admissible samples with its Wilson 95% interval, next to
    nu([0, c0/(l0 ||f||))) and nu([0, 1/(l0 ||f||))) when the law of |mu| is
    known in closed form.
    """
    if report.n < 1:
        raise PreconditionError("Admissibility probability needs at least one sample")
    cfg = report.config
    scale = cfg.l0 * cfg.f.sup_norm
    if scale == 0:
        reference_c0 = reference_one = 1.0
    else:
        reference_c0 = tv_probability_below(cfg.model, cfg.domain, cfg.c0 / scale)
        reference_one = tv_probability_below(cfg.model, cfg.domain, 1.0 / scale)

    low, high = wilson_interval(report.admissible_count, report.n)
    return AdmissibleProbability(
        p_hat=report.admissible_fraction,
        ci_low=low,
        ci_high=high,
        admissible=report.admissible_count,
        n=report.n,
        reference_c0=reference_c0,
        reference_one=reference_one,
    )


@dataclass(frozen=True)
class MomentReport:
    m: int
    empirical: float
    series_bound: float
    closed_bound: float
    terms: int

    @property
    def relative_gap(self) -> float:
        return abs(self.series_bound - self.closed_bound) / self.closed_bound

    def to_dict(self) -> dict:
        return {
            'm': self.m,
            'empirical': self.empirical,
            'series_bound': self.series_bound,
            'closed_bound': self.closed_bound,
            'series_terms': self.terms,
            'relative_gap': self.relative_gap,
        }


def moment_series(taus: np.ndarray, m: int) -> tuple:
    """
    1 + sum_{j>=1} C(m+j-1, j) E[tau^j], truncated once a term drops below
    SERIES_TERM_FLOOR while the terms decrease. Returns (value, terms used).
    """
    total = 1.0
    coefficient = 1.0
    previous = 1.0
    powers = np.ones_like(taus)
    for j in range(1, SERIES_MAX_TERMS + 1):
        coefficient *= (m + j - 1) / j
        powers = powers * taus
        term = coefficient * float(powers.mean())
        total += term
        ratio = term / previous if previous > 0 else 0.0
        if term < SERIES_TERM_FLOOR and ratio < 1:
            return total, j
        previous = term
    raise HypothesisViolationError(f"Moment series did not converge within {SERIES_MAX_TERMS} terms")


def moment_report(report: EnsembleReport, m: int) -> MomentReport:
    """Empirical E[||u||^m] against (2 eps0)^m E[(1 - tau)^-m] and its series form."""
    if int(m) != m or m < 1:
        raise PreconditionError(f"Moment order must be a positive integer, got m={m}")
    if not report.all_admissible:
        raise HypothesisViolationError(
            f"Moment bound assumes every sample admissible; sample {report.first_inadmissible()} is not"
        )
    taus = report.taus
    if np.any(taus >= 1):
        index = report.records[int(np.argmax(taus >= 1))].index
        raise HypothesisViolationError(f"Moment series diverges: sample {index} has tau >= 1")

    cfg = report.config
    eps = contraction_constants(cfg.spec, AtomicMeasure.empty(cfg.domain.dim), cfg.domain).eps
    prefactor = (2.0 * eps) ** m
    series, terms = moment_series(taus, m)
    closed = float(np.mean((1.0 - taus) ** (-m)))
    empirical = float(np.mean(report.sup_norms ** m))

    logger.info(f"Moment m={m}: empirical={empirical:.6g} closed={prefactor * closed:.6g} terms={terms}")
    return MomentReport(
        m=int(m),
        empirical=empirical,
        series_bound=prefactor * series,
        closed_bound=prefactor * closed,
        terms=terms,
    )
