from __future__ import annotations
"""
Permutation Service - permutation algebra on [n]

Permutations are stored as one-based image vectors (sigma(1), ..., sigma(n)).
Composition convention: (r o t)(i) = t(r(i)), i.e. r is applied first.
With x_sigma := (x_sigma(1), ..., x_sigma(n)) this is the convention under which

    apply(apply(x, s2), compose(s1, inverse(s2))) == apply(x, s1)

holds exactly, and more generally apply(apply(x, a), b) == apply(x, compose(b, a)).
"""
import os
import logging
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from services.errors import CapacityError, DimensionError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_SUBGROUP_CAP = int(os.getenv('SUBGROUP_CAP', 1_000_000))
MAX_FULL_GROUP_N = int(os.getenv('MAX_FULL_GROUP_N', 8))


@dataclass(frozen=True, order=True)
class Perm:
    image: tuple
    _index: np.ndarray = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        image = tuple(int(v) for v in self.image)
        n = len(image)
        if n < 1:
            raise DomainError("a permutation needs n >= 1")
        if sorted(image) != list(range(1, n + 1)):
            raise DomainError(f"not a bijection of 1..{n}: {' '.join(map(str, image))}")
        object.__setattr__(self, 'image', image)
        index = np.asarray(image, dtype=np.intp) - 1
        index.flags.writeable = False
        object.__setattr__(self, '_index', index)

    @property
    def n(self) -> int:
        return len(self.image)

    @property
    def index(self) -> np.ndarray:
        """Zero-based image, read-only"""
        return self._index

    @classmethod
    def identity(cls, n: int) -> 'Perm':
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def parse(cls, text: str) -> 'Perm':
        tokens = text.split()
        try:
            return cls(tuple(int(t) for t in tokens))
        except ValueError:
            raise DomainError(f"permutation entries must be integers: {text.strip()!r}")

    def is_identity(self) -> bool:
        return all(v == i for i, v in enumerate(self.image, start=1))

    def __str__(self) -> str:
        return ' '.join(str(v) for v in self.image)


def as_data_vec(values) -> np.ndarray:
    """Coerce observations to a 1-d float vector"""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"data must be a nonempty vector, got shape {x.shape}")
    return x


def apply(x, s: Perm) -> np.ndarray:
    """x_sigma = (x_sigma(1), ..., x_sigma(n))"""
    x = np.asarray(x)
    if x.shape[0] != s.n:
        raise DimensionError(f"data has length {x.shape[0]} but permutation acts on n={s.n}")
    return x[s.index]


def compose(r: Perm, t: Perm) -> Perm:
    """(r o t)(i) = t(r(i))"""
    if r.n != t.n:
        raise DimensionError(f"cannot compose permutations of sizes {r.n} and {t.n}")
    timage = t.image
    return Perm(tuple(timage[i - 1] for i in r.image))


def inverse(s: Perm) -> Perm:
    inv = [0] * s.n
    for i, v in enumerate(s.image, start=1):
        inv[v - 1] = i
    return Perm(tuple(inv))


def _shared_n(perms: Sequence[Perm], n: Optional[int] = None) -> int:
    sizes = {p.n for p in perms}
    if n is not None:
        sizes.add(n)
    if not sizes:
        raise DomainError("cannot infer n from an empty permutation list; pass n")
    if len(sizes) > 1:
        raise DimensionError(f"permutations disagree on n: {sorted(sizes)}")
    return sizes.pop()


def generate_subgroup(generators: Sequence[Perm], cap: int = DEFAULT_SUBGROUP_CAP,
                      n: Optional[int] = None) -> FrozenSet[Perm]:
    """
    Breadth-first closure of {Id} and the generators under compose.
    Raises CapacityError as soon as the closure grows past cap.
    """
    if cap < 1:
        raise DomainError(f"cap must be positive, got {cap}")
    n = _shared_n(list(generators), n)
    identity = Perm.identity(n)
    gens = list(dict.fromkeys(generators))

    group = {identity}
    queue = deque([identity])
    while queue:
        g = queue.popleft()
        for h in gens:
            gh = compose(g, h)
            if gh not in group:
                group.add(gh)
                if len(group) > cap:
                    raise CapacityError(f"subgroup closure exceeds cap of {cap} elements")
                queue.append(gh)

    logger.debug(f"Subgroup closure: {len(gens)} generators, n={n}, order {len(group)}")
    return frozenset(group)


def is_subgroup(perms: Iterable[Perm]) -> bool:
    """A finite nonempty set of permutations is a subgroup iff closed under compose"""
    members = set(perms)
    if not members:
        return False
    return all(compose(a, b) in members for a in members for b in members)


def full_group(n: int, max_n: int = MAX_FULL_GROUP_N) -> List[Perm]:
    """All n! permutations in lexicographic order"""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if n > max_n:
        raise CapacityError(f"full group S_{n} has {math.factorial(n)} elements; enumeration is capped at n={max_n}")
    return [Perm(p) for p in itertools.permutations(range(1, n + 1))]


def sort_lexicographic(perms: Iterable[Perm]) -> List[Perm]:
    return sorted(perms, key=lambda p: p.image)
