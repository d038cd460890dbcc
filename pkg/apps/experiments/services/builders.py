"""
Turn validated config documents into domain objects.
"""

import logging

from django.conf import settings

from apps.geometry.services.ball import BallDomain
from apps.measures.services.atomic import AtomicMeasure
from apps.measures.services.laws import Law
from apps.measures.services.samplers import AlloyModel, PointsModel, SeriesModel
from apps.potentials.services.profiles import BumpProfile
from apps.ensembles.services.config import EnsembleConfig, FieldSpec

logger = logging.getLogger(__name__)


DEFAULT_B = {'kind': 'constant', 'value': 0.1}
DEFAULT_G = {'kind': 'constant', 'value': 0.05}
DEFAULT_F = {'family': 'tent', 'amplitude': 1.0, 'radius': 0.5}


def build_law(data: dict) -> Law:
    return Law(**dict(data))


def build_profile(data: dict) -> BumpProfile:
    return BumpProfile(**dict(data))


def build_field(data: dict | None, fallback: dict) -> FieldSpec:
    data = dict(fallback if data is None else data)
    center = data.get('center')
    return FieldSpec(
        kind=data.get('kind', 'constant'),
        value=data.get('value', 0.0),
        center=tuple(center) if center is not None else None,
        radius=data.get('radius', 1.0),
    )


def build_domain(data: dict | None) -> BallDomain:
    data = data or {}
    dim = data.get('dim', 3)
    center = data.get('center')
    return BallDomain(
        dim=dim,
        center=tuple(center) if center is not None else (0.0,) * dim,
        radius=data.get('radius', 1.0),
    )


def build_measure(records, dim: int) -> AtomicMeasure:
    return AtomicMeasure.from_records(list(records or []), dim)


def empty_model() -> PointsModel:
    return PointsModel(count=Law.deterministic(0.0))


def build_model(data: dict | None, domain: BallDomain, f: BumpProfile):
    """Measure model from its config block; no block means the empty measure."""
    if data is None:
        return empty_model()

    variant = data['variant']
    if variant == 'alloy':
        return AlloyModel(spacing=data['spacing'], charge=build_law(data['charge']))

    if variant == 'points':
        charge = build_law(data['charge']) if 'charge' in data else Law.deterministic(1.0)
        if 'count' in data:
            return PointsModel(count=build_law(data['count']), charge=charge)
        return PointsModel.poisson(data['intensity'], domain, charge=charge)

    bases = tuple(build_measure(records, domain.dim) for records in data['base_measures'])
    for base in bases:
        base.validate_support(domain)
    builder = data.get('builder', 'explicit')
    if builder == 'summable':
        return SeriesModel.summable_bounded(
            bases,
            l0=domain.l0,
            sup_norm=f.sup_norm,
            q=data.get('q', 2.0),
            ceiling=data.get('ceiling', 1.0),
            fraction=data.get('fraction', 0.999),
        )
    if builder == 'geometric_exceedance':
        return SeriesModel.geometric_exceedance(
            bases[0],
            value=data['value'],
            terms=data['terms'],
            p0=data.get('p0', 0.5),
            ratio=data.get('ratio', 0.5),
        )
    return SeriesModel(
        base_measures=bases,
        coefficients=tuple(build_law(law) for law in data['coefficients']),
        cumulative=data.get('cumulative', False),
    )


def build_ensemble_config(data: dict) -> EnsembleConfig:
    """EnsembleConfig from a validated experiment document."""
    domain = build_domain(data.get('domain'))
    problem = data.get('problem') or {}
    f = build_profile(problem.get('f') or DEFAULT_F)
    threads = data.get('threads') or settings.LAB_DEFAULT_THREADS
    return EnsembleConfig(
        model=build_model(data.get('model'), domain, f),
        domain=domain,
        h=data.get('h', domain.radius / 12.0),
        p=problem.get('p', 2.0),
        b=build_field(problem.get('b'), DEFAULT_B),
        g=build_field(problem.get('g'), DEFAULT_G),
        f=f,
        c0=problem.get('c0', 0.5),
        eps=problem.get('eps'),
        n_samples=data.get('n_samples', 100),
        seed=data.get('seed', 0),
        threads=threads,
        tol=problem.get('tol', 1e-8),
        max_iter=problem.get('max_iter', 500),
    )


COMMAND_KEYS = {
    'green-check': ('tolerance',),
    'solve': (),
    'ensemble': ('moments',),
    'clt': ('k', 'trials', 'alpha', 'estimator'),
    'lln': ('k', 'trials', 'delta', 'pilot_size'),
    'borel-cantelli': ('c_tilde', 'k_max'),
}


def resolve_config(data: dict, cfg: EnsembleConfig, output_dir) -> dict:
    """Fully resolved document embedded in every report."""
    resolved = {'command': data['command'], 'out': str(output_dir), **cfg.to_dict()}
    if data['command'] == 'solve':
        resolved['measure'] = list(data.get('measure') or [])
    for key in COMMAND_KEYS[data['command']]:
        resolved[key] = data.get(key)
    return resolved
