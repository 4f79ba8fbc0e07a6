"""
Oracle Service - exact law of every p-value construction under the conditional null

Conditioning on the order statistics, the data vector is a uniformly random
assignment of a fixed multiset of values. The oracle enumerates those
assignments jointly with each method's internal randomness and returns the law
of the p-value as exact rationals.

Two paths are available:
  - collapsed (default): per assignment and anchor, the count of exceedances
    among i.i.d. or without-replacement draws is binomial or hypergeometric,
    so whole blocks of the draw space are summed in closed form;
  - brute force: `enumerate_outcomes` walks every point of the joint space and
    evaluates the p-value straight from its definition. Tests use it to check
    both the collapsed path and the engine.
"""
import os
import math
import logging
import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np

from services.errors import CapacityError, DimensionError, DomainError
from services.permutation_service import Perm, apply, as_data_vec, compose, inverse, is_subgroup
from services.distribution_service import PermDistribution, as_distribution, convolve
from services.statistics_service import Statistic
from services.testing_engine import (
    EXP_SAFE_LIMIT,
    Method,
    MethodSpec,
    ScoreCache,
)

logger = logging.getLogger(__name__)

ORACLE_MAX_N = int(os.getenv('ORACLE_MAX_N', 8))
ORACLE_MAX_TUPLES = int(os.getenv('ORACLE_MAX_TUPLES', 1_000_000))

# methods whose internal randomness is a tuple of draws
SAMPLED_METHODS = (Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE, Method.SAMPLED_SUBGROUP,
                   Method.PBAR_SAMPLED, Method.BESAG_CLIFFORD)


def fraction_str(value: Fraction) -> str:
    """Rational as a "num/den" string"""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class ExactDistribution:
    """Finite law {value: probability} with exact rational atoms"""
    atoms: Dict[Fraction, Fraction]
    method: str = ''
    factor: int = 1

    def __post_init__(self):
        if not self.atoms:
            raise DomainError("an exact distribution needs at least one atom")
        if sum(self.atoms.values()) != 1:
            raise DomainError("atom probabilities must sum to exactly 1")
        if any(p < 0 for p in self.atoms.values()):
            raise DomainError("atom probabilities must be nonnegative")
        ordered = {Fraction(v): Fraction(self.atoms[v]) for v in sorted(self.atoms)}
        object.__setattr__(self, 'atoms', ordered)

    @classmethod
    def from_law(cls, law: Dict[Fraction, Fraction], method: str = '', factor: int = 1) -> 'ExactDistribution':
        """Drop zero-probability atoms"""
        return cls({v: p for v, p in law.items() if p != 0}, method=method, factor=factor)

    @property
    def values(self) -> List[Fraction]:
        return list(self.atoms)

    def cdf(self, alpha) -> Fraction:
        """P(P <= alpha)"""
        a = Fraction(alpha)
        return sum((p for v, p in self.atoms.items() if v <= a), Fraction(0))

    def expectation(self) -> Fraction:
        return sum((v * p for v, p in self.atoms.items()), Fraction(0))

    def to_dict(self) -> Dict:
        return {
            'method': self.method,
            'factor': self.factor,
            'atoms': {fraction_str(v): fraction_str(p) for v, p in self.atoms.items()},
        }


@dataclass
class AuditResult:
    """Outcome of checking P(P <= a) <= factor * a at every atom a"""
    passed: bool
    factor: int
    worst_alpha: Fraction
    worst_cdf: Fraction
    failures: List[Fraction] = field(default_factory=list)

    @property
    def worst_excess(self) -> Fraction:
        return self.worst_cdf - self.factor * self.worst_alpha

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'factor': self.factor,
            'worst_alpha': fraction_str(self.worst_alpha),
            'worst_cdf': fraction_str(self.worst_cdf),
            'failures': [fraction_str(a) for a in self.failures],
        }


def validity_audit(dist: ExactDistribution, factor: int = 1) -> AuditResult:
    """
    The CDF of a discrete law is a step function, so P(P <= a) <= factor * a
    holds for every a in [0, 1] iff it holds at every atom.
    """
    if factor not in (1, 2):
        raise DomainError(f"validity factor must be 1 or 2, got {factor}")
    failures = []
    worst_alpha = worst_cdf = None
    running = Fraction(0)
    for value, prob in dist.atoms.items():
        running += prob
        if running > factor * value:
            failures.append(value)
        if worst_alpha is None or running - factor * value > worst_cdf - factor * worst_alpha:
            worst_alpha, worst_cdf = value, running
    result = AuditResult(passed=not failures, factor=factor, worst_alpha=worst_alpha,
                         worst_cdf=worst_cdf, failures=failures)
    if failures:
        logger.warning(f"Validity audit failed for {dist.method or 'distribution'} at alpha={fraction_str(failures[0])} "
                       f"(factor {factor})")
    return result


# ---------------------------------------------------------------------------
# enumeration helpers
# ---------------------------------------------------------------------------

def assignments(values: Sequence[float]) -> List[Tuple[tuple, Fraction]]:
    """Distinct orderings of the multiset with their probability under the uniform assignment law"""
    x = as_data_vec(values)
    n = x.shape[0]
    if n > ORACLE_MAX_N:
        raise CapacityError(f"oracle enumerates n! assignments and is capped at n={ORACLE_MAX_N}, got n={n}")
    total = math.factorial(n)
    counts = Counter(itertools.permutations(x.tolist()))
    return [(assignment, Fraction(count, total)) for assignment, count in counts.items()]


def _check_tuples(size: int, length: int):
    if size ** length > ORACLE_MAX_TUPLES:
        raise CapacityError(f"{size}^{length} draw tuples exceed the oracle cap of {ORACLE_MAX_TUPLES}")


def _pair_table(perms: Sequence[Perm]) -> List[List[Perm]]:
    """table[j][i] = compose(perms[i], inverse(perms[j])); independent of the data"""
    if len(perms) ** 2 > ORACLE_MAX_TUPLES:
        raise CapacityError(f"pair table over {len(perms)} permutations exceeds the oracle cap of {ORACLE_MAX_TUPLES}")
    inverses = [inverse(p) for p in perms]
    return [[compose(p, inv) for p in perms] for inv in inverses]


def _hit_matrix(cache: ScoreCache, table: List[List[Perm]]) -> np.ndarray:
    """H[j, i] = 1{T(x_{perms[i] o perms[j]^-1}) >= T(x)}"""
    return np.array([[cache.hit(p) for p in row] for row in table], dtype=bool)


def _binomial_law(M: int, p: Fraction) -> List[Tuple[int, Fraction]]:
    if p == 0:
        return [(0, Fraction(1))]
    if p == 1:
        return [(M, Fraction(1))]
    return [(k, math.comb(M, k) * p ** k * (1 - p) ** (M - k)) for k in range(M + 1)]


def _hypergeometric_law(population: int, successes: int, draws: int) -> List[Tuple[int, Fraction]]:
    total = math.comb(population, draws)
    law = []
    for k in range(max(0, draws - (population - successes)), min(draws, successes) + 1):
        law.append((k, Fraction(math.comb(successes, k) * math.comb(population - successes, draws - k), total)))
    return law


def _tuple_table(q: PermDistribution, length: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """All ordered support-index tuples with exact integer weights over denominator**length"""
    _check_tuples(q.size, length)
    tuples = np.array(list(itertools.product(range(q.size), repeat=length)), dtype=np.intp)
    numerators = np.array(q.numerators, dtype=object)
    weights = numerators[tuples].prod(axis=1)
    return tuples, weights, q.denominator ** length


def _add(law: Dict[Fraction, Fraction], value: Fraction, prob: Fraction):
    if prob:
        law[value] = law.get(value, Fraction(0)) + prob


def _accumulate_grouped(law, keys: np.ndarray, weights: np.ndarray, scale: Fraction, to_value):
    for key in np.unique(keys):
        _add(law, to_value(key), Fraction(int(weights[keys == key].sum())) * scale)


# ---------------------------------------------------------------------------
# collapsed enumeration
# ---------------------------------------------------------------------------

def _sampled_source(spec: MethodSpec) -> PermDistribution:
    q = as_distribution(spec.source)
    if spec.method == Method.BESAG_CLIFFORD:
        return convolve(q, spec.steps)
    return q


def _check_caps(spec: MethodSpec, q: PermDistribution):
    if spec.method in SAMPLED_METHODS:
        # the anchor-free subgroup test draws M permutations, every other sampled method M+1
        length = spec.M if spec.method == Method.SAMPLED_SUBGROUP else spec.M + 1
        _check_tuples(q.size, length)


def _collapsed_law(values, stat: Statistic, spec: MethodSpec) -> Dict[Fraction, Fraction]:
    method = spec.method
    q = _sampled_source(spec)
    _check_caps(spec, q)
    perms = list(q.perms)
    size = q.size
    M = spec.M

    if method == Method.SAMPLED_NOREPLACE:
        if not q.is_uniform():
            raise DomainError("sampling without replacement is only defined for uniform weights")
        if M + 1 > size:
            raise DomainError(f"cannot draw M+1={M + 1} permutations without replacement from {size}")
    if method == Method.SAMPLED_SUBGROUP and not is_subgroup(perms):
        raise DomainError("the anchor-free sampled test needs a subgroup; use sampled-iid for a general set")

    needs_pairs = method not in (Method.NAIVE, Method.RANDOMIZATION, Method.SAMPLED_SUBGROUP)
    table = _pair_table(perms) if needs_pairs else None
    tuples = weights = None
    if method == Method.PBAR_SAMPLED:
        tuples, weights, tuple_denominator = _tuple_table(q, M + 1)
        tuple_scale = Fraction(1, tuple_denominator)

    law: Dict[Fraction, Fraction] = {}
    for x, wx in assignments(values):
        if len(x) != q.n:
            raise DimensionError(f"values have length {len(x)} but permutations act on n={q.n}")
        cache = ScoreCache(np.array(x), stat)

        if method == Method.NAIVE:
            _add(law, Fraction(sum(cache.hit(p) for p in perms), size), wx)
            continue
        if method == Method.RANDOMIZATION:
            scores = [cache.score(p) for p in perms]
            for assigned in scores:
                _add(law, Fraction(sum(s >= assigned for s in scores), size), wx / size)
            continue
        if method == Method.SAMPLED_SUBGROUP:
            p_hit = Fraction(sum(cache.hit(p) for p in perms), size)
            for k, pk in _binomial_law(M, p_hit):
                _add(law, Fraction(1 + k, 1 + M), wx * pk)
            continue

        hits = _hit_matrix(cache, table)
        if method == Method.EXHAUSTIVE:
            for j, wj in enumerate(q.weights):
                numerator = sum(num for num, hit in zip(q.numerators, hits[j]) if hit)
                _add(law, Fraction(numerator, q.denominator), wx * wj)
        elif method in (Method.SAMPLED_IID, Method.BESAG_CLIFFORD):
            for j, wj in enumerate(q.weights):
                p_hit = sum((w for w, hit in zip(q.weights, hits[j]) if hit), Fraction(0))
                for k, pk in _binomial_law(M, p_hit):
                    _add(law, Fraction(1 + k, 1 + M), wx * wj * pk)
        elif method == Method.SAMPLED_NOREPLACE:
            for j in range(size):
                # the anchor itself is never among the other M draws
                successes = int(hits[j].sum()) - 1
                for k, pk in _hypergeometric_law(size - 1, successes, M):
                    _add(law, Fraction(1 + k, 1 + M), wx * pk / size)
        elif method == Method.EXCHANGEABLE:
            for j in range(size):
                _add(law, Fraction(int(hits[j].sum()), size), wx / size)
        elif method == Method.PBAR_EXHAUSTIVE:
            numerator = 0
            for j, wj in enumerate(q.numerators):
                numerator += wj * sum(num for num, hit in zip(q.numerators, hits[j]) if hit)
            _add(law, Fraction(numerator, q.denominator ** 2), wx)
        elif method == Method.PBAR_SAMPLED:
            counts = hits[tuples[:, :, None], tuples[:, None, :]].sum(axis=(1, 2))
            _accumulate_grouped(law, counts, weights, wx * tuple_scale,
                                lambda c: Fraction(int(c), (M + 1) ** 2))
        else:
            raise DomainError(f"the oracle has no law for {method.value}")
    return law


# ---------------------------------------------------------------------------
# brute-force enumeration
# ---------------------------------------------------------------------------

class Outcome(NamedTuple):
    """One point of the joint space: assignment, internal draws, p-value and its probability"""
    x: tuple
    draws: tuple
    value: Fraction
    prob: Fraction


def _draw_space(spec: MethodSpec) -> Iterator[Tuple[tuple, Fraction]]:
    """Internal randomness of a method as (draws, probability) pairs"""
    method = spec.method
    q = _sampled_source(spec)
    weights = q.as_dict()
    perms = list(q.perms)
    size = q.size
    M = spec.M

    if method in (Method.NAIVE, Method.PBAR_EXHAUSTIVE):
        yield (), Fraction(1)
    elif method == Method.EXHAUSTIVE:
        for p in perms:
            yield (p,), weights[p]
    elif method == Method.RANDOMIZATION:
        for p in perms:
            yield (p,), Fraction(1, size)
    elif method in (Method.SAMPLED_IID, Method.PBAR_SAMPLED, Method.BESAG_CLIFFORD):
        _check_tuples(size, M + 1)
        for draws in itertools.product(perms, repeat=M + 1):
            yield draws, math.prod((weights[p] for p in draws), start=Fraction(1))
    elif method == Method.SAMPLED_SUBGROUP:
        _check_tuples(size, M)
        for draws in itertools.product(perms, repeat=M):
            yield draws, Fraction(1, size ** M)
    elif method == Method.SAMPLED_NOREPLACE:
        if not q.is_uniform():
            raise DomainError("sampling without replacement is only defined for uniform weights")
        if M + 1 > size:
            raise DomainError(f"cannot draw M+1={M + 1} permutations without replacement from {size}")
        _check_tuples(size, M + 1)
        prob = Fraction(1, math.perm(size, M + 1))
        for draws in itertools.permutations(perms, M + 1):
            yield draws, prob
    elif method == Method.EXCHANGEABLE:
        if math.factorial(size) > ORACLE_MAX_TUPLES:
            raise CapacityError(f"{size}! orderings exceed the oracle cap of {ORACLE_MAX_TUPLES}")
        prob = Fraction(1, math.factorial(size))
        for ordering in itertools.permutations(perms):
            yield ordering, prob
    else:
        raise DomainError(f"the oracle has no law for {method.value}")


def _definition_value(method: Method, x: np.ndarray, stat: Statistic, perms: Sequence[Perm],
                      weights: Dict[Perm, Fraction], draws: tuple, M: int) -> Fraction:
    """The p-value evaluated literally from its defining formula"""
    observed = stat(x)

    def exceeds(perm, anchor):
        return stat(apply(x, compose(perm, inverse(anchor)))) >= observed

    if method == Method.NAIVE:
        return Fraction(sum(stat(apply(x, p)) >= observed for p in perms), len(perms))
    if method == Method.EXHAUSTIVE:
        anchor = draws[0]
        return sum((weights[p] for p in perms if exceeds(p, anchor)), Fraction(0))
    if method in (Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE):
        anchor = draws[0]
        return Fraction(1 + sum(exceeds(p, anchor) for p in draws[1:]), 1 + M)
    if method == Method.SAMPLED_SUBGROUP:
        return Fraction(1 + sum(stat(apply(x, p)) >= observed for p in draws), 1 + M)
    if method == Method.EXCHANGEABLE:
        anchor = draws[0]
        return Fraction(sum(exceeds(p, anchor) for p in draws), len(draws))
    if method == Method.PBAR_EXHAUSTIVE:
        return sum((weights[a] * weights[p] for a in perms for p in perms if exceeds(p, a)), Fraction(0))
    if method == Method.PBAR_SAMPLED:
        return Fraction(sum(exceeds(p, a) for a in draws for p in draws), len(draws) ** 2)
    if method == Method.RANDOMIZATION:
        assigned = stat(apply(x, draws[0]))
        return Fraction(sum(stat(apply(x, p)) >= assigned for p in perms), len(perms))
    if method == Method.BESAG_CLIFFORD:
        # draws = (hidden label h, sibling moves rho_1..rho_M); hidden state is x_{h^-1}
        hidden = apply(x, inverse(draws[0]))
        siblings = [apply(hidden, rho) for rho in draws[1:]]
        return Fraction(1 + sum(stat(z) >= observed for z in siblings), 1 + M)
    raise DomainError(f"the oracle has no law for {method.value}")


def enumerate_outcomes(values, stat: Statistic, spec: MethodSpec) -> Iterator[Outcome]:
    """Every (assignment, internal draws) point with its p-value and probability"""
    if spec.method == Method.EVALUE:
        raise DomainError("e-values are not p-values; use exact_e_expectation")
    q = _sampled_source(spec)
    if spec.method == Method.SAMPLED_SUBGROUP and not is_subgroup(q.perms):
        raise DomainError("the anchor-free sampled test needs a subgroup; use sampled-iid for a general set")
    weights = q.as_dict()
    space = list(_draw_space(spec))
    for x, wx in assignments(values):
        vec = np.array(x)
        if vec.shape[0] != q.n:
            raise DimensionError(f"values have length {vec.shape[0]} but permutations act on n={q.n}")
        for draws, prob in space:
            value = _definition_value(spec.method, vec, stat, q.perms, weights, draws, spec.M)
            yield Outcome(x, draws, value, wx * prob)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def exact_p_distribution(values, stat: Statistic, spec: MethodSpec, brute_force: bool = False) -> ExactDistribution:
    """Exact law of the p-value under the uniform assignment of `values`"""
    if spec.method == Method.EVALUE:
        raise DomainError("e-values are not p-values; use exact_e_expectation")
    if brute_force:
        law: Dict[Fraction, Fraction] = {}
        for outcome in enumerate_outcomes(values, stat, spec):
            _add(law, outcome.value, outcome.prob)
    else:
        law = _collapsed_law(values, stat, spec)
    dist = ExactDistribution.from_law(law, method=spec.method.value, factor=spec.factor)
    logger.info(f"Exact law for {spec.method.value}: {len(dist.atoms)} atoms, "
                f"P(P <= min atom) = {fraction_str(dist.cdf(dist.values[0]))}")
    return dist


def _evalues(diffs: np.ndarray, size: int) -> np.ndarray:
    """Row-wise E = size / sum exp(d), switching to log space past the overflow threshold"""
    peak = diffs.max(axis=1)
    if float(peak.max()) <= EXP_SAFE_LIMIT:
        return size / np.exp(diffs).sum(axis=1)
    log_total = peak + np.log(np.exp(diffs - peak[:, None]).sum(axis=1))
    return np.exp(math.log(size) - log_total)


def exact_e_expectation(values, stat: Statistic, q, M: int) -> Fraction:
    """
    E[E] over assignments x (M+1)-tuples drawn i.i.d. from q. Each E is a float
    converted exactly, so the sum carries no further rounding.
    """
    if M < 0:
        raise DomainError(f"M must be nonnegative, got {M}")
    q = as_distribution(q)
    tuples, weights, denominator = _tuple_table(q, M + 1)
    table = _pair_table(list(q.perms))
    anchors = tuples[:, :1]

    total = Fraction(0)
    for x, wx in assignments(values):
        if len(x) != q.n:
            raise DimensionError(f"values have length {len(x)} but permutations act on n={q.n}")
        cache = ScoreCache(np.array(x), stat)
        diffs_table = np.array([[cache.score(p) - cache.observed for p in row] for row in table])
        evalues = _evalues(diffs_table[anchors, tuples], M + 1)
        unique, inverse_idx = np.unique(evalues, return_inverse=True)
        scale = wx / denominator
        for k, e in enumerate(unique):
            total += Fraction(float(e)) * Fraction(int(weights[inverse_idx == k].sum())) * scale
    logger.info(f"Exact e-value expectation over {q.size}^{M + 1} draw tuples: {float(total):.12g}")
    return total
