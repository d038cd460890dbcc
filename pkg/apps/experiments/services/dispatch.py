"""
Command dispatch for `manage.py lab`.

Each handler takes the validated document and its EnsembleConfig and returns
the report body, the named pass/fail verdicts and the CSV tables to write.
"""

import logging
from dataclasses import dataclass, field

import pandas as pd

from apps.common.exceptions import InsufficientHistoryError
from apps.measures.services.atomic import total_variation
from apps.measures.services.samplers import SAMPLE_STREAM, derive_seed, sample_measure
from apps.operators.services.grid import GridField
from apps.operators.services.quadrature import QUADRATURE_SLACK, apply_H, torsion_error, torsion_solution
from apps.solver.services.picard import observed_contraction, picard_solve
from apps.ensembles.services.borel_cantelli import borel_cantelli_check
from apps.ensembles.services.config import EnsembleConfig
from apps.ensembles.services.limit_theorems import clt_self_test, clt_test, lln_test
from apps.ensembles.services.runner import run_ensemble
from apps.ensembles.services.statistics import admissible_probability, moment_report
from .builders import build_measure

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    report: dict
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def run_green_check(data: dict, cfg: EnsembleConfig) -> CommandResult:
    rule, kernel = cfg.rule, cfg.kernel
    error = torsion_error(rule, kernel)
    approx = apply_H(GridField.constant(rule.layout, 1.0), rule, kernel)
    exact = torsion_solution(rule.layout)

    table = approx.to_frame('h_of_one')
    table['torsion'] = exact.values
    report = {
        'h': cfg.h,
        'nodes': rule.node_count,
        'l0': cfg.l0,
        'sup_relative_error': error,
        'tolerance': data['tolerance'],
        'operator_sup': approx.sup_norm,
    }
    verdicts = {
        'torsion_oracle': error <= data['tolerance'],
        'operator_bound': approx.sup_norm <= cfg.l0 * (1.0 + QUADRATURE_SLACK),
    }
    return CommandResult(report=report, verdicts=verdicts, tables={'field.csv': table})


def run_solve(data: dict, cfg: EnsembleConfig) -> CommandResult:
    if 'measure' in data:
        mu = build_measure(data['measure'], cfg.domain.dim)
        mu.validate_support(cfg.domain)
    else:
        mu = sample_measure(cfg.model, cfg.domain, derive_seed(cfg.seed, SAMPLE_STREAM, 0))

    outcome = picard_solve(cfg.spec, mu, cfg.rule, cfg.kernel, tol=cfg.tol, max_iter=cfg.max_iter)
    report = {'total_variation': total_variation(mu), **outcome.to_dict()}
    verdicts = {'admissible': outcome.admissible}
    tables = {}
    if outcome.admissible:
        try:
            report['observed_contraction'] = observed_contraction(outcome.gaps)
        except InsufficientHistoryError:
            report['observed_contraction'] = None
        verdicts['norm_bound'] = outcome.sup_norm <= outcome.norm_bound * (1.0 + QUADRATURE_SLACK)
        tables['field.csv'] = outcome.u.to_frame('u')
    return CommandResult(report=report, verdicts=verdicts, tables=tables)


def run_ensemble_command(data: dict, cfg: EnsembleConfig) -> CommandResult:
    ensemble = run_ensemble(cfg)
    report = {
        'aggregates': ensemble.aggregates(),
        'admissible_probability': admissible_probability(ensemble).to_dict(),
        'moments': [],
        'norm_bound_violations': ensemble.norm_bound_violations(),
    }
    verdicts = {'norm_bound': not report['norm_bound_violations']}
    for m in data.get('moments') or []:
        moment = moment_report(ensemble, m)
        report['moments'].append(moment.to_dict())
        verdicts[f'moment_{m}'] = moment.empirical <= moment.closed_bound * (1.0 + QUADRATURE_SLACK)
    return CommandResult(report=report, verdicts=verdicts, tables={'samples.csv': ensemble.frame()})


def run_clt(data: dict, cfg: EnsembleConfig) -> CommandResult:
    result = clt_test(cfg, k=data['k'], trials=data['trials'], alpha=data['alpha'], estimator=data['estimator'])
    surrogate = clt_self_test(k=data['k'], trials=data['trials'], seed=cfg.seed, alpha=data['alpha'])
    report = {'clt': result.to_dict(), 'self_test': surrogate.to_dict()}
    verdicts = {'ks': result.passed, 'self_test': surrogate.passed}
    sums = pd.DataFrame({'trial': range(result.trials), 'standardized_sum': result.sums})
    return CommandResult(report=report, verdicts=verdicts, tables={'sums.csv': sums})


def run_lln(data: dict, cfg: EnsembleConfig) -> CommandResult:
    result = lln_test([cfg], k=data['k'], delta=data['delta'], trials=data['trials'], pilot_size=data.get('pilot_size'))
    sums = pd.DataFrame({'trial': range(result.trials), 'mean_deviation': result.deviations})
    return CommandResult(report={'lln': result.to_dict()}, verdicts={'chebyshev': result.passed}, tables={'sums.csv': sums})


def run_borel_cantelli(data: dict, cfg: EnsembleConfig) -> CommandResult:
    result = borel_cantelli_check(
        cfg.model,
        c_tilde=data['c_tilde'],
        k_max=data['k_max'],
        n_draws=cfg.n_samples,
        l0=cfg.l0,
        sup_norm=cfg.f.sup_norm,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    return CommandResult(
        report={'borel_cantelli': result.to_dict()},
        verdicts={'tail_admissible': result.admissible_tail_fraction == 1.0},
        tables={'partial_sums.csv': result.frame()},
    )


HANDLERS = {
    'green-check': run_green_check,
    'solve': run_solve,
    'ensemble': run_ensemble_command,
    'clt': run_clt,
    'lln': run_lln,
    'borel-cantelli': run_borel_cantelli,
}


def dispatch(data: dict, cfg: EnsembleConfig) -> CommandResult:
    command = data['command']
    logger.info(f"Dispatching '{command}' (seed={cfg.seed}, h={cfg.h:.4g}, threads={cfg.threads})")
    result = HANDLERS[command](data, cfg)
    logger.info(f"'{command}' verdicts: {result.verdicts}")
    return result
