"""
Distribution Service - finite distributions over permutations and seeded samplers

Weights are held as exact rationals (normalized) so that p-values built from
them can be formed as one integer ratio and rounded once.
"""
import math
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.errors import DimensionError, DomainError
from services.permutation_service import Perm, compose

logger = logging.getLogger(__name__)


class RngStream:
    """
    Stream-addressed generator: PCG64 seeded from SeedSequence([seed, counter]).
    Identical (seed, counter) give identical draws on every platform; replicate r
    of a calibration run uses counter r.
    """

    def __init__(self, seed: int, counter: int = 0):
        if seed is None:
            raise DomainError("a seed is required for randomized methods")
        self.seed = int(seed)
        self.counter = int(counter)
        if not (0 <= self.seed < 2 ** 64 and 0 <= self.counter < 2 ** 64):
            raise DomainError("seed and stream counter must be 64-bit unsigned integers")
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.counter])))

    def uniform(self, count: int) -> np.ndarray:
        return self._generator.random(count)

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)"""
        return int(self._generator.integers(low, high))

    def normal(self, size: int) -> np.ndarray:
        return self._generator.standard_normal(size)

    def generator(self) -> np.random.Generator:
        return self._generator

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"


@dataclass(frozen=True)
class PermDistribution:
    """Finite weighted support {(sigma, q(sigma))} in file order"""
    perms: Tuple[Perm, ...]
    weights: Tuple[Fraction, ...]
    raw_total: float = 1.0
    _cumulative: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    _numerators: Tuple[int, ...] = field(default=None, init=False, repr=False, compare=False)
    _denominator: int = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.perms:
            raise DomainError("a permutation distribution needs a nonempty support")
        if len(self.perms) != len(self.weights):
            raise DimensionError("support and weights differ in length")
        sizes = {p.n for p in self.perms}
        if len(sizes) != 1:
            raise DimensionError(f"support permutations disagree on n: {sorted(sizes)}")
        if len(set(self.perms)) != len(self.perms):
            raise DomainError("support permutations must be distinct")
        if sum(self.weights) != 1:
            raise DomainError("weights must be normalized; use PermDistribution.from_weights")

        denominator = math.lcm(*(w.denominator for w in self.weights))
        numerators = tuple(w.numerator * (denominator // w.denominator) for w in self.weights)
        cumulative = np.cumsum([float(w) for w in self.weights])
        cumulative.flags.writeable = False
        object.__setattr__(self, '_denominator', denominator)
        object.__setattr__(self, '_numerators', numerators)
        object.__setattr__(self, '_cumulative', cumulative)

    @classmethod
    def from_weights(cls, perms: Sequence[Perm], weights: Sequence) -> 'PermDistribution':
        """Normalize arbitrary nonnegative weights; zero-weight entries are pruned"""
        if len(perms) != len(weights):
            raise DimensionError("support and weights differ in length")
        exact = []
        for w in weights:
            fw = w if isinstance(w, Fraction) else Fraction(w)
            if fw < 0:
                raise DomainError(f"weights must be nonnegative, got {w}")
            exact.append(fw)
        total = sum(exact, Fraction(0))
        if total <= 0:
            raise DomainError("weights must have a positive sum")
        kept = [(p, w / total) for p, w in zip(perms, exact) if w > 0]
        return cls(tuple(p for p, _ in kept), tuple(w for _, w in kept), raw_total=float(total))

    @property
    def n(self) -> int:
        return self.perms[0].n

    @property
    def size(self) -> int:
        return len(self.perms)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    @property
    def numerators(self) -> Tuple[int, ...]:
        """Weights as integers over the common denominator"""
        return self._numerators

    @property
    def denominator(self) -> int:
        return self._denominator

    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1

    def weight_of(self, perm: Perm) -> Fraction:
        for p, w in zip(self.perms, self.weights):
            if p == perm:
                return w
        return Fraction(0)

    def as_dict(self) -> Dict[Perm, Fraction]:
        return dict(zip(self.perms, self.weights))

    def sample_indices(self, count: int, rng: RngStream) -> np.ndarray:
        """Cumulative-weight inversion over the support in file order"""
        u = rng.uniform(count)
        idx = np.searchsorted(self._cumulative, u, side='right')
        return np.minimum(idx, self.size - 1)


def uniform_on(perms: Sequence[Perm]) -> PermDistribution:
    if not perms:
        raise DomainError("cannot build a uniform distribution on an empty set")
    if len(set(perms)) != len(perms):
        raise DomainError("permutation set contains duplicates")
    share = Fraction(1, len(perms))
    return PermDistribution(tuple(perms), tuple(share for _ in perms))


def point_mass(perm: Perm) -> PermDistribution:
    return PermDistribution((perm,), (Fraction(1),))


def sample_iid(d: PermDistribution, count: int, rng: RngStream) -> List[Perm]:
    if count < 1:
        raise DomainError(f"count must be at least 1, got {count}")
    return [d.perms[i] for i in d.sample_indices(count, rng)]


def sample_without_replacement(perms: Sequence[Perm], count: int, rng: RngStream) -> List[Perm]:
    """Uniform random count-subset in uniform random order (partial Fisher-Yates)"""
    size = len(perms)
    if count < 1:
        raise DomainError(f"count must be at least 1, got {count}")
    if count > size:
        raise DomainError(f"cannot draw {count} permutations without replacement from a set of {size}")
    pool = list(perms)
    for i in range(count):
        j = rng.integer(i, size)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:count]


class UniformSymmetricSampler:
    """
    Opaque uniform sampler on all of S_n (Fisher-Yates), for sampled methods when
    n! is too large to list. Exhaustive methods do not accept it.
    """

    def __init__(self, n: int):
        if n < 1:
            raise DomainError(f"n must be positive, got {n}")
        self.n = n

    @property
    def support_size(self) -> int:
        return math.factorial(self.n)

    def sample(self, count: int, rng: RngStream) -> List[Perm]:
        if count < 1:
            raise DomainError(f"count must be at least 1, got {count}")
        draws = []
        for _ in range(count):
            image = list(range(1, self.n + 1))
            for i in range(self.n - 1, 0, -1):
                j = rng.integer(0, i + 1)
                image[i], image[j] = image[j], image[i]
            draws.append(Perm(tuple(image)))
        return draws


PermSource = Union[PermDistribution, Sequence[Perm], UniformSymmetricSampler]


def as_distribution(source: PermSource) -> PermDistribution:
    if isinstance(source, PermDistribution):
        return source
    if isinstance(source, UniformSymmetricSampler):
        raise DomainError("an opaque sampler has no explicit support; this method needs one")
    return uniform_on(list(source))


def convolve(q: PermDistribution, steps: int) -> PermDistribution:
    """Exact law of compose(tau_1, compose(tau_2, ... tau_s)) for i.i.d. tau_k ~ q"""
    if steps < 1:
        raise DomainError(f"steps must be at least 1, got {steps}")
    law: Dict[Perm, Fraction] = dict(q.as_dict())
    for _ in range(steps - 1):
        nxt: Dict[Perm, Fraction] = {}
        for p, wp in law.items():
            for r, wr in zip(q.perms, q.weights):
                pr = compose(p, r)
                nxt[pr] = nxt.get(pr, Fraction(0)) + wp * wr
        law = nxt
    perms = sorted(law, key=lambda p: p.image)
    return PermDistribution(tuple(perms), tuple(law[p] for p in perms))
