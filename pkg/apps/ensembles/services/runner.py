"""
Monte Carlo ensembles of independent realizations.

Sample i of stream s draws its measure from
SeedSequence(entropy=seed, spawn_key=(s, i)), so every record is a pure
function of (config, stream, index) and the report does not depend on how
the samples were scheduled over worker threads.
"""

import logging
import math
from dataclasses import dataclass, asdict
from multiprocessing.pool import ThreadPool

import numpy as np
import pandas as pd

from apps.common.exceptions import LabError, SampleFailureError
from apps.measures.services.atomic import total_variation
from apps.measures.services.samplers import SAMPLE_STREAM, derive_seed, sample_measure
from apps.operators.services.grid import CSV_FLOAT_FORMAT
from apps.operators.services.quadrature import QUADRATURE_SLACK
from apps.solver.services.picard import picard_solve
from .config import EnsembleConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleRecord:
    index: int
    total_variation: float
    tau: float
    q: float | None
    admissible: bool
    sup_norm: float | None
    norm_bound: float | None
    iterations: int
    residual: float | None

    @property
    def within_norm_bound(self) -> bool:
        """||u||_inf <= 2 eps / (1 - tau) up to quadrature slack; vacuous for inadmissible samples."""
        if not self.admissible:
            return True
        return self.sup_norm <= self.norm_bound * (1.0 + QUADRATURE_SLACK)


def solve_sample(cfg: EnsembleConfig, index: int, stream: int = SAMPLE_STREAM) -> SampleRecord:
    try:
        mu = sample_measure(cfg.model, cfg.domain, derive_seed(cfg.seed, stream, index))
        outcome = picard_solve(cfg.spec, mu, cfg.rule, cfg.kernel, tol=cfg.tol, max_iter=cfg.max_iter)
    except LabError as exc:
        logger.error(f"Sample {index} (stream {stream}) failed: {exc.message}")
        raise SampleFailureError(index, exc) from exc

    return SampleRecord(
        index=index,
        total_variation=total_variation(mu),
        tau=outcome.budget.tau,
        q=outcome.budget.q,
        admissible=outcome.admissible,
        sup_norm=outcome.sup_norm,
        norm_bound=outcome.norm_bound if math.isfinite(outcome.norm_bound) else None,
        iterations=outcome.iterations,
        residual=outcome.residual,
    )


def run_samples(tasks: list, threads: int = 1) -> list:
    """Solve (config, stream, index) tasks; results come back in task order."""
    for cfg in {id(task[0]): task[0] for task in tasks}.values():
        cfg.warm()
    if threads == 1 or len(tasks) <= 1:
        return [solve_sample(cfg, index, stream) for cfg, stream, index in tasks]
    with ThreadPool(processes=threads) as pool:
        return pool.starmap(solve_sample, [(cfg, index, stream) for cfg, stream, index in tasks])


@dataclass(frozen=True, eq=False)
class EnsembleReport:
    config: EnsembleConfig
    records: tuple
    stream: int = SAMPLE_STREAM

    @property
    def n(self) -> int:
        return len(self.records)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(record) for record in self.records])

    @property
    def admissible_count(self) -> int:
        return sum(1 for record in self.records if record.admissible)

    @property
    def admissible_fraction(self) -> float:
        return self.admissible_count / self.n

    @property
    def all_admissible(self) -> bool:
        return self.admissible_count == self.n

    @property
    def sup_norms(self) -> np.ndarray:
        """||u||_inf of the admissible samples, in index order."""
        return np.array([record.sup_norm for record in self.records if record.admissible], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return np.array([record.tau for record in self.records], dtype=float)

    @property
    def total_variations(self) -> np.ndarray:
        return np.array([record.total_variation for record in self.records], dtype=float)

    def norm_bound_violations(self) -> list:
        """Indices of admissible samples whose solution leaves the contraction ball."""
        return [record.index for record in self.records if not record.within_norm_bound]

    def first_inadmissible(self) -> int | None:
        return next((record.index for record in self.records if not record.admissible), None)

    def aggregates(self) -> dict:
        sup_norms = self.sup_norms
        tvs = self.total_variations
        aggregates = {
            'n_samples': self.n,
            'admissible_fraction': self.admissible_fraction,
            'total_variation_mean': float(tvs.mean()),
            'total_variation_second_moment': float(np.mean(tvs ** 2)),
            'sup_norm_mean': None,
            'sup_norm_second_moment': None,
            'sup_norm_variance': None,
        }
        if sup_norms.size:
            aggregates['sup_norm_mean'] = float(sup_norms.mean())
            aggregates['sup_norm_second_moment'] = float(np.mean(sup_norms ** 2))
            aggregates['sup_norm_variance'] = float(sup_norms.var(ddof=1)) if sup_norms.size > 1 else 0.0
        return aggregates

    def to_csv(self, path) -> None:
        self.frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def run_ensemble(cfg: EnsembleConfig, n_samples: int | None = None, stream: int = SAMPLE_STREAM) -> EnsembleReport:
    count = cfg.n_samples if n_samples is None else n_samples
    logger.info(
        f"Ensemble start: {count} samples, model={cfg.model.variant}, h={cfg.h:.4g}, "
        f"seed={cfg.seed}, stream={stream}, threads={cfg.threads}"
    )
    records = run_samples([(cfg, stream, index) for index in range(count)], threads=cfg.threads)
    report = EnsembleReport(config=cfg, records=tuple(records), stream=stream)
    logger.info(
        f"Ensemble done: admissible fraction {report.admissible_fraction:.4f} "
        f"({report.admissible_count}/{report.n})"
    )
    return report
