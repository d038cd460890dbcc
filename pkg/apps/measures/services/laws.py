"""
Probability laws for charges, atom counts and series coefficients.

Every law declares an almost-sure support so that a.s. bounds on the total
variation of the sampled measures stay computable.
"""

import math
import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

from apps.common.exceptions import PreconditionError

logger = logging.getLogger(__name__)


FAMILIES = ('uniform', 'bernoulli', 'deterministic', 'poisson', 'integers')


@dataclass(frozen=True)
class Law:
    """
    family:
        uniform        uniform on [low, high]
        bernoulli      `value` with probability p, otherwise `base`
        deterministic  always `value`
        poisson        Poisson(lam) on {0, 1, ...}
        integers       uniform on {low, ..., high}
    """

    family: str
    low: float = 0.0
    high: float = 0.0
    value: float = 0.0
    base: float = 0.0
    p: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PreconditionError(f"Unknown law family '{self.family}' (expected one of {', '.join(FAMILIES)})")
        if self.family in ('uniform', 'integers') and self.high < self.low:
            raise PreconditionError(f"{self.family} law needs low <= high, got [{self.low}, {self.high}]")
        if self.family == 'integers' and (int(self.low) != self.low or int(self.high) != self.high):
            raise PreconditionError("integers law needs integer bounds")
        if self.family == 'bernoulli' and not 0.0 <= self.p <= 1.0:
            raise PreconditionError(f"bernoulli law needs 0 <= p <= 1, got {self.p}")
        if self.family == 'poisson' and self.lam < 0:
            raise PreconditionError(f"poisson law needs lam >= 0, got {self.lam}")

    # ── Constructors ──

    @classmethod
    def uniform(cls, low: float, high: float) -> 'Law':
        return cls('uniform', low=float(low), high=float(high))

    @classmethod
    def bernoulli(cls, p: float, value: float, base: float = 0.0) -> 'Law':
        return cls('bernoulli', p=float(p), value=float(value), base=float(base))

    @classmethod
    def deterministic(cls, value: float) -> 'Law':
        return cls('deterministic', value=float(value))

    @classmethod
    def poisson(cls, lam: float) -> 'Law':
        return cls('poisson', lam=float(lam))

    @classmethod
    def integers(cls, low: int, high: int) -> 'Law':
        return cls('integers', low=float(low), high=float(high))

    # ── Sampling ──

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == 'uniform':
            return rng.uniform(self.low, self.high, size)
        if self.family == 'bernoulli':
            return np.where(rng.random(size) < self.p, self.value, self.base)
        if self.family == 'deterministic':
            return np.full(size, self.value)
        if self.family == 'poisson':
            return rng.poisson(self.lam, size).astype(float)
        return rng.integers(int(self.low), int(self.high) + 1, size).astype(float)

    def sample_count(self, rng: np.random.Generator) -> int:
        count = self.sample(rng, 1)[0]
        if count < 0 or count != int(count):
            raise PreconditionError(f"Count law produced {count}; counts must be nonnegative integers")
        return int(count)

    # ── Support and moments ──

    def support(self) -> tuple:
        if self.family in ('uniform', 'integers'):
            return self.low, self.high
        if self.family == 'bernoulli':
            if self.p == 0.0:
                return self.base, self.base
            if self.p == 1.0:
                return self.value, self.value
            return min(self.value, self.base), max(self.value, self.base)
        if self.family == 'deterministic':
            return self.value, self.value
        return 0.0, (0.0 if self.lam == 0 else math.inf)

    def abs_bound(self) -> float:
        """Almost-sure bound on |X|."""
        low, high = self.support()
        return max(abs(low), abs(high))

    def is_degenerate(self) -> bool:
        low, high = self.support()
        return low == high

    def prob_abs_below(self, threshold: float) -> float:
        """P(|X| < threshold), in closed form for every family."""
        t = float(threshold)
        if t <= 0:
            return 0.0
        if self.family == 'deterministic':
            return float(abs(self.value) < t)
        if self.family == 'bernoulli':
            return self.p * float(abs(self.value) < t) + (1 - self.p) * float(abs(self.base) < t)
        if self.family == 'uniform':
            if self.high == self.low:
                return float(abs(self.low) < t)
            overlap = max(0.0, min(self.high, t) - max(self.low, -t))
            return overlap / (self.high - self.low)
        frozen = self.frozen()
        cut = math.ceil(t)
        return float(frozen.cdf(cut - 1) - frozen.cdf(-cut))

    def frozen(self):
        """scipy.stats frozen distribution for the discrete families."""
        if self.family == 'poisson':
            return stats.poisson(self.lam)
        if self.family == 'integers':
            return stats.randint(int(self.low), int(self.high) + 1)
        raise PreconditionError(f"No discrete scipy law for family '{self.family}'")

    # ── Serialization ──

    def to_dict(self) -> dict:
        keys = {
            'uniform': ('low', 'high'),
            'bernoulli': ('p', 'value', 'base'),
            'deterministic': ('value',),
            'poisson': ('lam',),
            'integers': ('low', 'high'),
        }[self.family]
        data = asdict(self)
        return {'family': self.family, **{key: data[key] for key in keys}}

    @classmethod
    def from_dict(cls, data: dict) -> 'Law':
        return cls(**{key: (value if key == 'family' else float(value)) for key, value in data.items()})
