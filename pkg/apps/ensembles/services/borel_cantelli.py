"""
Exceedance check for series measures mu = sum_j a_j mu_j.

L_k = {|S_k| >= c~} for the partial sums S_k. When sum_k P(L_k) converges,
only finitely many L_k occur almost surely, so past its last exceedance
every draw stays in the admissible regime |mu| < c~ < 1 / (l0 ||f||).
"""

import math
import logging
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool

import numpy as np
import pandas as pd

from apps.common.exceptions import PreconditionError
from apps.measures.services.atomic import AtomicMeasure, total_variation
from apps.measures.services.samplers import SAMPLE_STREAM, SeriesModel, derive_seed, sample_series_coefficients
from apps.operators.services.grid import CSV_FLOAT_FORMAT

logger = logging.getLogger(__name__)


def partial_sum_variations(model: SeriesModel, coefficients: np.ndarray) -> np.ndarray:
    """|S_1|, ..., |S_J| for one draw, accumulating atoms term by term."""
    measure = AtomicMeasure.empty(model.dim)
    variations = np.empty(model.terms)
    for j in range(model.terms):
        if coefficients[j] != 0.0:
            measure = measure.concatenated(model.base(j).scaled(coefficients[j])).combined()
        variations[j] = total_variation(measure)
    return variations


@dataclass(frozen=True, eq=False)
class BorelCantelliReport:
    c_tilde: float
    k_max: int
    n_draws: int
    exceedance_probs: np.ndarray = field(repr=False)
    partial_sums: np.ndarray = field(repr=False)
    partial_sum_se: np.ndarray = field(repr=False)
    last_exceedance: np.ndarray = field(repr=False)
    admissible_tail_fraction: float

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'k': np.arange(1, self.k_max + 1),
            'exceedance_prob': self.exceedance_probs,
            'partial_sum': self.partial_sums,
            'partial_sum_se': self.partial_sum_se,
        })

    def to_csv(self, path) -> None:
        self.frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    def to_dict(self) -> dict:
        return {
            'c_tilde': self.c_tilde,
            'k_max': self.k_max,
            'n_draws': self.n_draws,
            'exceedance_probs': [float(v) for v in self.exceedance_probs],
            'partial_sums': [float(v) for v in self.partial_sums],
            'partial_sum_se': [float(v) for v in self.partial_sum_se],
            'admissible_tail_fraction': self.admissible_tail_fraction,
            'max_last_exceedance': int(self.last_exceedance.max()) if self.n_draws else 0,
        }


def borel_cantelli_check(
    model: SeriesModel,
    c_tilde: float,
    k_max: int,
    n_draws: int,
    l0: float,
    sup_norm: float,
    seed: int = 0,
    threads: int = 1,
) -> BorelCantelliReport:
    """
    Monte Carlo estimates of P(L_k), k <= k_max, from the same n_draws series
    draws, with the running sums sum_{j<=k} P(L_j) and their standard errors.
    """
    if model.variant != 'series':
        raise PreconditionError(f"Exceedance check needs a series model, got '{model.variant}'")
    scale = l0 * sup_norm
    if not (c_tilde > 0 and c_tilde * scale < 1):
        raise PreconditionError(
            f"Threshold c~ must lie in (0, 1/(l0 ||f||)) = (0, {1.0 / scale if scale else math.inf:.6g}), "
            f"got {c_tilde}"
        )
    if not 1 <= k_max <= model.terms:
        raise PreconditionError(f"K_max must lie in [1, {model.terms}], got {k_max}")
    if n_draws < 2:
        raise PreconditionError(f"Need at least 2 draws, got {n_draws}")

    def draw(index: int) -> np.ndarray:
        coefficients = sample_series_coefficients(model, derive_seed(seed, SAMPLE_STREAM, index))
        return partial_sum_variations(model, coefficients)

    logger.info(f"Exceedance check: {n_draws} draws, c~={c_tilde:g}, K_max={k_max}, terms={model.terms}")
    if threads == 1:
        variations = [draw(index) for index in range(n_draws)]
    else:
        with ThreadPool(processes=threads) as pool:
            variations = pool.map(draw, range(n_draws))
    variations = np.vstack(variations)

    exceed = variations >= c_tilde
    counts = np.cumsum(exceed[:, :k_max], axis=1)
    partial_sums = counts.mean(axis=0)
    partial_sum_se = counts.std(axis=0, ddof=1) / math.sqrt(n_draws)

    # 1-based index of the last exceeding partial sum, 0 when none exceeds
    reversed_hits = exceed[:, ::-1]
    last_exceedance = np.where(exceed.any(axis=1), model.terms - np.argmax(reversed_hits, axis=1), 0)
    tail_fraction = float(np.mean(variations[:, -1] <= c_tilde))

    report = BorelCantelliReport(
        c_tilde=c_tilde,
        k_max=k_max,
        n_draws=n_draws,
        exceedance_probs=exceed[:, :k_max].mean(axis=0),
        partial_sums=partial_sums,
        partial_sum_se=partial_sum_se,
        last_exceedance=last_exceedance,
        admissible_tail_fraction=tail_fraction,
    )
    logger.info(
        f"Exceedance check done: sum P(L_k) = {partial_sums[-1]:.4f} +/- {partial_sum_se[-1]:.4f}, "
        f"tail fraction {tail_fraction:.4f}"
    )
    return report
