"""
Monte Carlo checks of the limit theorems for Z_j = ||u_j||_inf.

CLT:  sum_{j<=k} (Z_j - m) / (sigma sqrt(k)) against N(0, 1) by a
      Kolmogorov-Smirnov test.
LLN:  P(|k^-1 sum_j (Z_j - E Z_j)| >= delta) against the Chebyshev bound
      min(1, 4 Q0^2 / (delta^2 k)), Q0 = 2 eps0 / (1 - L).
"""

import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from apps.common.exceptions import DegenerateDistributionError, HypothesisViolationError, PreconditionError
from apps.measures.services.atomic import AtomicMeasure
from apps.measures.services.samplers import PILOT_STREAM, TRIAL_STREAM, derive_seed, make_rng, tv_upper_bound
from apps.solver.services.contraction import contraction_constants
from .config import EnsembleConfig
from .runner import EnsembleReport, run_ensemble, run_samples

logger = logging.getLogger(__name__)


DEFAULT_ALPHA = 0.01
PILOT_FACTOR = 10
SIGMA_FLOOR = 1e-12
ESTIMATORS = ('pilot', 'pooled')


def ks_critical_value(alpha: float, points: int) -> float:
    """Asymptotic KS critical value sqrt(-ln(alpha / 2) / (2 M))."""
    return math.sqrt(-math.log(alpha / 2.0) / (2.0 * points))


def standardized_sums(samples: np.ndarray, mean: float, sigma: float) -> np.ndarray:
    """Row-wise sum_j (Z_j - m) / (sigma sqrt(k)) for a (trials, k) array."""
    k = samples.shape[1]
    return (samples - mean).sum(axis=1) / (sigma * math.sqrt(k))


def require_admissible(report: EnsembleReport, theorem: str) -> None:
    if not report.all_admissible:
        raise HypothesisViolationError(
            f"{theorem} assumes every realization admissible; sample {report.first_inadmissible()} is not"
        )


@dataclass(frozen=True, eq=False)
class CltReport:
    ks_stat: float
    critical_value: float
    alpha: float
    m_hat: float
    sigma_hat: float
    k: int
    trials: int
    estimator: str
    pilot_size: int
    sums: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.ks_stat <= self.critical_value

    @property
    def standardization_se(self) -> float | None:
        """Std. deviation of the shift a pilot mean induces in each standardized sum."""
        if self.pilot_size == 0:
            return None
        return math.sqrt(self.k / self.pilot_size)

    def to_dict(self) -> dict:
        return {
            'ks_stat': self.ks_stat,
            'critical_value': self.critical_value,
            'alpha': self.alpha,
            'pass': self.passed,
            'm_hat': self.m_hat,
            'sigma_hat': self.sigma_hat,
            'k': self.k,
            'trials': self.trials,
            'estimator': self.estimator,
            'pilot_size': self.pilot_size,
            'standardization_se': self.standardization_se,
        }


def ks_against_normal(sums: np.ndarray) -> float:
    return float(stats.kstest(sums, 'norm').statistic)


def clt_test(
    cfg: EnsembleConfig,
    k: int,
    trials: int,
    alpha: float = DEFAULT_ALPHA,
    estimator: str = 'pilot',
) -> CltReport:
    """
    Standardized sums of k i.i.d. solution norms over `trials` independent
    blocks. m and sigma come from an independent pilot of 10 k samples
    (estimator='pilot') or from the trial samples themselves ('pooled').
    """
    if k < 1 or trials < 2:
        raise PreconditionError(f"Need k >= 1 and trials >= 2, got k={k}, trials={trials}")
    if estimator not in ESTIMATORS:
        raise PreconditionError(f"Unknown estimator '{estimator}' (expected one of {', '.join(ESTIMATORS)})")

    pilot_size = 0
    if estimator == 'pilot':
        pilot_size = PILOT_FACTOR * k
        pilot = run_ensemble(cfg, n_samples=pilot_size, stream=PILOT_STREAM)
        require_admissible(pilot, 'The central limit theorem')
        m_hat = float(pilot.sup_norms.mean())
        sigma_hat = float(pilot.sup_norms.std(ddof=1))
        if sigma_hat < SIGMA_FLOOR:
            raise DegenerateDistributionError(f"Pilot standard deviation {sigma_hat:.3e} is below {SIGMA_FLOOR:g}")

    trial_report = run_ensemble(cfg, n_samples=k * trials, stream=TRIAL_STREAM)
    require_admissible(trial_report, 'The central limit theorem')
    samples = trial_report.sup_norms.reshape(trials, k)

    if estimator == 'pooled':
        m_hat = float(samples.mean())
        sigma_hat = float(samples.std(ddof=1))
        if sigma_hat < SIGMA_FLOOR:
            raise DegenerateDistributionError(f"Sample standard deviation {sigma_hat:.3e} is below {SIGMA_FLOOR:g}")

    sums = standardized_sums(samples, m_hat, sigma_hat)
    report = CltReport(
        ks_stat=ks_against_normal(sums),
        critical_value=ks_critical_value(alpha, trials),
        alpha=alpha,
        m_hat=m_hat,
        sigma_hat=sigma_hat,
        k=k,
        trials=trials,
        estimator=estimator,
        pilot_size=pilot_size,
        sums=sums,
    )
    logger.info(
        f"CLT k={k} trials={trials} ({estimator}): KS={report.ks_stat:.4f} "
        f"critical={report.critical_value:.4f} pass={report.passed}"
    )
    return report


def clt_self_test(k: int, trials: int, seed: int = 0, alpha: float = DEFAULT_ALPHA) -> CltReport:
    """Same harness on i.i.d. standard normal surrogates; passes with probability 1 - alpha."""
    rng = make_rng(derive_seed(seed, TRIAL_STREAM, 0))
    samples = rng.standard_normal((trials, k))
    sums = standardized_sums(samples, 0.0, 1.0)
    return CltReport(
        ks_stat=ks_against_normal(sums),
        critical_value=ks_critical_value(alpha, trials),
        alpha=alpha,
        m_hat=0.0,
        sigma_hat=1.0,
        k=k,
        trials=trials,
        estimator='surrogate',
        pilot_size=0,
        sums=sums,
    )


@dataclass(frozen=True, eq=False)
class LlnReport:
    empirical_prob: float
    chebyshev_bound: float
    binomial_se: float
    L: float
    Q0: float
    k: int
    delta: float
    trials: int
    pilot_size: int
    deviations: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.empirical_prob <= self.chebyshev_bound + 2.0 * self.binomial_se

    def to_dict(self) -> dict:
        return {
            'empirical_prob': self.empirical_prob,
            'chebyshev_bound': self.chebyshev_bound,
            'binomial_se': self.binomial_se,
            'pass': self.passed,
            'L': self.L,
            'Q0': self.Q0,
            'k': self.k,
            'delta': self.delta,
            'trials': self.trials,
            'pilot_size': self.pilot_size,
        }


def chebyshev_bound(Q0: float, delta: float, k: int) -> float:
    return min(1.0, 4.0 * Q0 ** 2 / (delta ** 2 * k))


def lln_test(configs, k: int, delta: float, trials: int, pilot_size: int | None = None) -> LlnReport:
    """
    `configs` lists the model of each index j = 1..k; a single config means
    identically distributed Z_j. All configs must share the problem data.
    E[Z_j] is estimated by one pilot per distinct model.
    """
    configs = list(configs)
    if len(configs) == 1:
        configs = configs * k
    if len(configs) != k:
        raise PreconditionError(f"Need 1 or k={k} configs, got {len(configs)}")
    if len({cfg.problem_key() for cfg in configs}) > 1:
        raise PreconditionError("All configs must share domain, grid spacing and problem data; only the model may vary")
    if not delta > 0 or trials < 1:
        raise PreconditionError(f"Need delta > 0 and trials >= 1, got delta={delta}, trials={trials}")

    base = configs[0]
    scale = base.l0 * base.f.sup_norm
    L = scale * max(tv_upper_bound(cfg.model, cfg.domain) for cfg in configs)
    if not L < 1:
        raise HypothesisViolationError(f"Law hypothesis needs l0 ||f|| ess sup |mu_j| < 1, got L={L:.6g}")
    eps = contraction_constants(base.spec, AtomicMeasure.empty(base.domain.dim), base.domain).eps
    Q0 = 2.0 * eps / (1.0 - L)

    # One pilot per distinct model, each on its own block of pilot indices
    pilot_size = pilot_size or max(PILOT_FACTOR * trials, 100)
    distinct = {}
    for cfg in configs:
        distinct.setdefault(id(cfg.model), cfg)
    pilot_means = {}
    for position, (key, cfg) in enumerate(distinct.items()):
        offset = position * pilot_size
        tasks = [(cfg, PILOT_STREAM, offset + i) for i in range(pilot_size)]
        pilot = EnsembleReport(config=cfg, records=tuple(run_samples(tasks, base.threads)), stream=PILOT_STREAM)
        require_admissible(pilot, 'The law of large numbers')
        pilot_means[key] = float(pilot.sup_norms.mean())
    expected = np.array([pilot_means[id(cfg.model)] for cfg in configs])

    tasks = [(configs[j], TRIAL_STREAM, t * k + j) for t in range(trials) for j in range(k)]
    trial_report = EnsembleReport(config=base, records=tuple(run_samples(tasks, base.threads)), stream=TRIAL_STREAM)
    require_admissible(trial_report, 'The law of large numbers')
    samples = trial_report.sup_norms.reshape(trials, k)

    deviations = (samples - expected).mean(axis=1)
    empirical = float(np.mean(np.abs(deviations) >= delta))
    bound = chebyshev_bound(Q0, delta, k)
    report = LlnReport(
        empirical_prob=empirical,
        chebyshev_bound=bound,
        binomial_se=math.sqrt(bound * (1.0 - bound) / trials),
        L=L,
        Q0=Q0,
        k=k,
        delta=delta,
        trials=trials,
        pilot_size=pilot_size,
        deviations=deviations,
    )
    logger.info(
        f"LLN k={k} delta={delta:g} trials={trials}: empirical={empirical:.4f} "
        f"bound={bound:.4f} pass={report.passed}"
    )
    return report
