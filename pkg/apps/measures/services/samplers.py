"""
Random measure models and their samplers.

    alloy   charges q_i on the lattice (h_L Z)^n inside the closed ball
    points  N random atoms uniform in the ball, charges from a law
            (unit charges give the glass model; random charges the combined model)
    series  sum_j a_j mu_j for fixed atomic base measures mu_j

Samplers are pure functions of (model, seed): the same seed reproduces the
same measure bit for bit.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from apps.common.exceptions import PreconditionError
from .atomic import AtomicMeasure, total_variation
from .laws import Law

logger = logging.getLogger(__name__)


# Stream identifiers mixed into per-sample seeds
SAMPLE_STREAM = 0
PILOT_STREAM = 1
TRIAL_STREAM = 2


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master_seed: int, stream: int, index: int) -> np.random.SeedSequence:
    """Seed for sample `index` of `stream`, independent of scheduling."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream), int(index)))


# =============================================================================
# MODELS
# =============================================================================

@dataclass(frozen=True)
class AlloyModel:
    spacing: float
    charge: Law
    variant: str = field(default='alloy', init=False)

    def __post_init__(self):
        if not self.spacing > 0:
            raise PreconditionError(f"Lattice spacing must be positive, got {self.spacing}")

    def to_dict(self) -> dict:
        return {'variant': self.variant, 'spacing': self.spacing, 'charge': self.charge.to_dict()}


@dataclass(frozen=True)
class PointsModel:
    count: Law
    charge: Law = field(default_factory=lambda: Law.deterministic(1.0))
    variant: str = field(default='points', init=False)

    @classmethod
    def poisson(cls, intensity: float, domain, charge: Law | None = None) -> 'PointsModel':
        """Poisson point process of the given intensity: N ~ Poisson(intensity * vol(U))."""
        return cls(
            count=Law.poisson(intensity * domain.volume),
            charge=charge or Law.deterministic(1.0),
        )

    def to_dict(self) -> dict:
        return {'variant': self.variant, 'count': self.count.to_dict(), 'charge': self.charge.to_dict()}


@dataclass(frozen=True, eq=False)
class SeriesModel:
    """
    mu = sum_{j <= J} a_j mu_j, J = len(coefficients).

    With cumulative=True the laws describe the partial-sum coefficients c_k
    and a_k = c_k - c_{k-1}, c_0 = 0. A single base measure is reused for
    every term.
    """

    base_measures: tuple
    coefficients: tuple
    cumulative: bool = False
    variant: str = field(default='series', init=False)

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise PreconditionError("Series truncation J must be at least 1")
        if len(self.base_measures) not in (1, len(self.coefficients)):
            raise PreconditionError(
                f"Series needs 1 or {len(self.coefficients)} base measures, got {len(self.base_measures)}"
            )
        object.__setattr__(self, 'base_measures', tuple(self.base_measures))
        object.__setattr__(self, 'coefficients', tuple(self.coefficients))

    @property
    def terms(self) -> int:
        return len(self.coefficients)

    @property
    def dim(self) -> int:
        return self.base_measures[0].dim

    def base(self, j: int) -> AtomicMeasure:
        """Base measure of term j (0-based)."""
        if len(self.base_measures) == 1:
            return self.base_measures[0]
        return self.base_measures[j]

    @classmethod
    def summable_bounded(
        cls,
        base_measures,
        l0: float,
        sup_norm: float,
        q: float = 2.0,
        ceiling: float = 1.0,
        fraction: float = 0.999,
    ) -> 'SeriesModel':
        """
        Coefficients uniform on [-a_j, a_j] with

            a_j = fraction * ceiling * zeta(q)^-1 * j^-q / (l0 |mu_j| ||f||)

        so that |mu| < ceiling / (l0 ||f||) on every draw. ceiling=1 is the
        summability bound for a.s. existence; ceiling=c0 keeps every draw
        inside the contraction condition.
        """
        if not q > 1:
            raise PreconditionError(f"Summability exponent q must exceed 1, got {q}")
        if not 0 < fraction < 1 or not ceiling > 0:
            raise PreconditionError("Need 0 < fraction < 1 and ceiling > 0")
        base_measures = tuple(base_measures)
        normalizer = 1.0 / float(zeta(q, 1))
        coefficients = []
        for j, base in enumerate(base_measures, start=1):
            mass = total_variation(base)
            if mass == 0:
                raise PreconditionError(f"Base measure {j} has zero total variation")
            bound = fraction * ceiling * normalizer / (l0 * mass * sup_norm) / j ** q
            coefficients.append(Law.uniform(-bound, bound))
        return cls(base_measures=base_measures, coefficients=tuple(coefficients))

    @classmethod
    def geometric_exceedance(
        cls,
        base_measure: AtomicMeasure,
        value: float,
        terms: int,
        p0: float = 0.5,
        ratio: float = 0.5,
    ) -> 'SeriesModel':
        """Cumulative series with S_k = c_k mu, c_k = value w.p. p0 * ratio^(k-1), else 0."""
        coefficients = tuple(Law.bernoulli(p0 * ratio ** (k - 1), value) for k in range(1, terms + 1))
        return cls(base_measures=(base_measure,), coefficients=coefficients, cumulative=True)

    def to_dict(self) -> dict:
        return {
            'variant': self.variant,
            'cumulative': self.cumulative,
            'base_measures': [base.to_records() for base in self.base_measures],
            'coefficients': [law.to_dict() for law in self.coefficients],
        }


# =============================================================================
# SAMPLERS
# =============================================================================

def lattice_sites(domain, spacing: float) -> np.ndarray:
    """Points of (spacing * Z)^n inside the closed ball."""
    center = domain.center_array
    low = np.floor((center - domain.radius) / spacing).astype(int)
    high = np.ceil((center + domain.radius) / spacing).astype(int)
    axes = [np.arange(lo, hi + 1) * spacing for lo, hi in zip(low, high)]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, domain.dim)
    return grid[domain.contains(grid, closed=True)]


def uniform_ball_points(rng: np.random.Generator, domain, count: int) -> np.ndarray:
    directions = rng.standard_normal((count, domain.dim))
    norms = np.linalg.norm(directions, axis=1)
    norms[norms == 0] = 1.0
    radii = domain.radius * rng.random(count) ** (1.0 / domain.dim)
    return domain.center_array + directions / norms[:, None] * radii[:, None]


def sample_alloy(model: AlloyModel, domain, rng_seed) -> AtomicMeasure:
    rng = make_rng(rng_seed)
    sites = lattice_sites(domain, model.spacing)
    charges = model.charge.sample(rng, sites.shape[0])
    return AtomicMeasure(domain.dim, sites, charges)


def sample_points(model: PointsModel, domain, rng_seed) -> AtomicMeasure:
    rng = make_rng(rng_seed)
    count = model.count.sample_count(rng)
    locations = uniform_ball_points(rng, domain, count)
    charges = model.charge.sample(rng, count)
    return AtomicMeasure(domain.dim, locations, charges)


def sample_series_coefficients(model: SeriesModel, rng_seed) -> np.ndarray:
    """Term coefficients a_1..a_J of one draw."""
    rng = make_rng(rng_seed)
    drawn = np.array([law.sample(rng, 1)[0] for law in model.coefficients])
    if model.cumulative:
        return np.diff(drawn, prepend=0.0)
    return drawn


def series_partial_sum(model: SeriesModel, coefficients: np.ndarray, k: int) -> AtomicMeasure:
    """S_k = sum_{j <= k} a_j mu_j with coincident atoms merged."""
    measure = AtomicMeasure.empty(model.dim)
    for j in range(min(k, model.terms)):
        if coefficients[j] != 0.0:
            measure = measure.concatenated(model.base(j).scaled(coefficients[j]))
    return measure.combined()


def sample_series(model: SeriesModel, rng_seed) -> AtomicMeasure:
    coefficients = sample_series_coefficients(model, rng_seed)
    return series_partial_sum(model, coefficients, model.terms)


def sample_measure(model, domain, rng_seed) -> AtomicMeasure:
    if model.variant == 'alloy':
        return sample_alloy(model, domain, rng_seed)
    if model.variant == 'points':
        return sample_points(model, domain, rng_seed)
    return sample_series(model, rng_seed)


# =============================================================================
# LAW OF THE TOTAL VARIATION
# =============================================================================

def tv_upper_bound(model, domain) -> float:
    """Almost-sure upper bound on |mu_omega| for draws of `model`."""
    if model.variant == 'alloy':
        sites = lattice_sites(domain, model.spacing).shape[0]
        return sites * model.charge.abs_bound()

    if model.variant == 'points':
        charge = model.charge.abs_bound()
        if charge == 0.0:
            return 0.0
        return model.count.support()[1] * charge

    bounds = np.array([law.abs_bound() for law in model.coefficients])
    masses = np.array([total_variation(model.base(j)) for j in range(model.terms)])
    if not model.cumulative:
        return float(np.sum(bounds * masses))
    if len(model.base_measures) == 1:
        # Telescoping: mu = c_J mu_1
        return float(bounds[-1] * masses[0])
    previous = np.concatenate([[0.0], bounds[:-1]])
    return float(np.sum((bounds + previous) * masses))


def tv_probability_below(model, domain, threshold: float):
    """
    nu([0, threshold)) = P(|mu_omega| < threshold) when the law of |mu| has a
    closed form for this model, otherwise None.
    """
    if model.variant == 'alloy':
        sites = lattice_sites(domain, model.spacing).shape[0]
        if sites == 0:
            return float(threshold > 0)
        if model.charge.is_degenerate():
            return float(sites * abs(model.charge.support()[0]) < threshold)
        if sites == 1:
            return model.charge.prob_abs_below(threshold)
        return None

    if model.variant == 'points':
        if not model.charge.is_degenerate():
            return None
        charge = abs(model.charge.support()[0])
        if charge == 0.0:
            return float(threshold > 0)
        return model.count.prob_abs_below(threshold / charge)

    if all(law.is_degenerate() for law in model.coefficients):
        measure = sample_series(model, 0)
        return float(total_variation(measure) < threshold)
    return None
