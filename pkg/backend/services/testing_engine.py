from __future__ import annotations
"""
Testing Engine - permutation p-values, averaged p-values, e-values and the
randomization-test p-value

Every construction compares T(x_rho) >= T(x) with exact floating-point >=.
P-values are formed as one exact integer ratio and rounded once, so the same
rational always yields the same float whichever construction produced it.
"""
import math
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from services.errors import DimensionError, DomainError
from services.permutation_service import Perm, apply, as_data_vec, compose, inverse, is_subgroup
from services.distribution_service import (
    PermDistribution,
    PermSource,
    RngStream,
    UniformSymmetricSampler,
    as_distribution,
    sample_iid,
    sample_without_replacement,
    uniform_on,
)
from services.statistics_service import Statistic

logger = logging.getLogger(__name__)

NAIVE_WARNING = 'validity: NOT guaranteed unless S is a subgroup'

# exp() overflows just above 709; past this threshold the e-value is formed in log space
EXP_SAFE_LIMIT = 700.0


class Method(str, Enum):
    NAIVE = 'naive'
    EXHAUSTIVE = 'exhaustive-q'
    SAMPLED_IID = 'sampled-iid'
    SAMPLED_NOREPLACE = 'sampled-noreplace'
    SAMPLED_SUBGROUP = 'sampled-subgroup'
    EXCHANGEABLE = 'exchangeable'
    PBAR_EXHAUSTIVE = 'pbar-exhaustive'
    PBAR_SAMPLED = 'pbar-sampled'
    EVALUE = 'evalue'
    RANDOMIZATION = 'randomization'
    BESAG_CLIFFORD = 'besag-clifford'


METHOD_ALIASES = {
    'naive-subset': Method.NAIVE,
    'corrected-subset': Method.EXHAUSTIVE,
    'exhaustive': Method.EXHAUSTIVE,
    'sampled': Method.SAMPLED_IID,
    'bc': Method.BESAG_CLIFFORD,
    'pbar': Method.PBAR_EXHAUSTIVE,
}


def parse_method(name: str) -> Method:
    key = name.strip().lower()
    if key in METHOD_ALIASES:
        return METHOD_ALIASES[key]
    try:
        return Method(key)
    except ValueError:
        known = sorted({m.value for m in Method} | set(METHOD_ALIASES))
        raise DomainError(f"unknown method {name!r}; expected one of {', '.join(known)}")


@dataclass
class TestReport:
    __test__ = False

    method: str
    value: float
    statistic: str
    statistic_value: float
    n: int
    M: int = 0
    seed: Optional[int] = None
    anchor: Optional[Perm] = None
    support_size: Optional[int] = None
    draws: Optional[List[Perm]] = None
    reciprocal: Optional[float] = None
    weight_total: Optional[float] = None
    warning: Optional[str] = None

    @property
    def is_evalue(self) -> bool:
        return self.method == Method.EVALUE.value

    def to_dict(self, include_draws: bool = False) -> Dict:
        report = {'method': self.method}
        report['e_value' if self.is_evalue else 'p_value'] = self.value
        report.update({
            'statistic': self.statistic,
            'statistic_value': self.statistic_value,
            'n': self.n,
            'M': self.M,
            'seed': self.seed,
            'anchor': list(self.anchor.image) if self.anchor is not None else None,
            'support_size': self.support_size,
        })
        if self.reciprocal is not None:
            report['e_value_reciprocal'] = self.reciprocal
        if self.weight_total is not None and self.weight_total != 1.0:
            report['weight_total'] = self.weight_total
        if self.warning:
            report['warning'] = self.warning
        if include_draws and self.draws is not None:
            report['draws'] = [list(p.image) for p in self.draws]
        return report


class ScoreCache:
    """T(x) and memoized T(x_rho) for one data vector"""

    def __init__(self, x, stat: Statistic):
        self.x = as_data_vec(x)
        self.stat = stat
        self.observed = stat(self.x)
        self._scores: Dict[Perm, float] = {}

    def score(self, perm: Perm) -> float:
        value = self._scores.get(perm)
        if value is None:
            value = self.stat(apply(self.x, perm))
            self._scores[perm] = value
        return value

    def hit(self, perm: Perm) -> bool:
        """1{T(x_perm) >= T(x)}"""
        return self.score(perm) >= self.observed


def _check_n(x: np.ndarray, n: int):
    if x.shape[0] != n:
        raise DimensionError(f"data has length {x.shape[0]} but permutations act on n={n}")


def _base_report(method: Method, cache: ScoreCache, value: float, **extra) -> TestReport:
    return TestReport(method=method.value, value=value, statistic=cache.stat.name,
                      statistic_value=cache.observed, n=int(cache.x.shape[0]), **extra)


def anchored_hits(cache: ScoreCache, perms: Sequence[Perm], anchor: Perm) -> List[bool]:
    """1{T(x_{sigma o anchor^-1}) >= T(x)} for each sigma"""
    anchor_inv = inverse(anchor)
    return [cache.hit(compose(p, anchor_inv)) for p in perms]


def pvalue_naive(x, stat: Statistic, perms: Sequence[Perm]) -> TestReport:
    """
    P = #{sigma in S : T(x_sigma) >= T(x)} / |S|.
    Valid for a subgroup S (or the full group); in general it is not, and it is
    kept as the negative control.
    """
    perms = list(perms)
    if not perms:
        raise DomainError("naive p-value needs a nonempty permutation set")
    cache = ScoreCache(x, stat)
    _check_n(cache.x, perms[0].n)
    hits = sum(cache.hit(p) for p in perms)
    return _base_report(Method.NAIVE, cache, hits / len(perms),
                        support_size=len(perms), warning=NAIVE_WARNING)


def _draw_anchor(q: PermDistribution, rng: Optional[RngStream], anchor: Optional[Perm]) -> Perm:
    if anchor is not None:
        if q.weight_of(anchor) == 0:
            raise DomainError(f"forced anchor {anchor} is not in the support")
        return anchor
    if rng is None:
        raise DomainError("a seeded RngStream is required to draw the anchor")
    return q.perms[int(q.sample_indices(1, rng)[0])]


def pvalue_exhaustive(x, stat: Statistic, q: PermSource, rng: Optional[RngStream] = None,
                      anchor: Optional[Perm] = None) -> TestReport:
    """
    Draw sigma_0 ~ q and return sum_sigma q(sigma) 1{T(x_{sigma o sigma_0^-1}) >= T(x)}.
    q uniform on S gives the corrected subset test.

    `anchor` forces sigma_0 and exists for tests only; fixing it at the identity
    reproduces the invalid naive p-value.
    """
    q = as_distribution(q)
    cache = ScoreCache(x, stat)
    _check_n(cache.x, q.n)
    sigma0 = _draw_anchor(q, rng, anchor)
    hits = anchored_hits(cache, q.perms, sigma0)
    numerator = sum(num for num, hit in zip(q.numerators, hits) if hit)
    value = numerator / q.denominator
    logger.debug(f"exhaustive-q: anchor {sigma0}, {sum(hits)}/{q.size} support points exceed")
    return _base_report(Method.EXHAUSTIVE, cache, value, seed=rng.seed if rng is not None and anchor is None else None,
                        anchor=sigma0, support_size=q.size, draws=[sigma0], weight_total=q.raw_total)


def anchor_profile(x, stat: Statistic, q: PermSource) -> List[tuple]:
    """(anchor, q(anchor), P given that anchor) for every support point"""
    q = as_distribution(q)
    cache = ScoreCache(x, stat)
    _check_n(cache.x, q.n)
    profile = []
    for sigma0, w in zip(q.perms, q.weights):
        hits = anchored_hits(cache, q.perms, sigma0)
        numerator = sum(num for num, hit in zip(q.numerators, hits) if hit)
        profile.append((sigma0, w, Fraction(numerator, q.denominator)))
    return profile


def anchored_count_pvalue(cache: ScoreCache, draws: Sequence[Perm]) -> float:
    """(1 + sum_{m>=1} 1{T(x_{sigma_m o sigma_0^-1}) >= T(x)}) / (1 + M)"""
    hits = anchored_hits(cache, draws[1:], draws[0])
    return (1 + sum(hits)) / len(draws)


def _support_size(source: PermSource) -> int:
    if isinstance(source, UniformSymmetricSampler):
        return source.support_size
    if isinstance(source, PermDistribution):
        return source.size
    return len(source)


def draw_sampled(source: PermSource, M: int, replacement: bool, rng: RngStream) -> List[Perm]:
    """sigma_0, ..., sigma_M for the sampled test"""
    if M < 1:
        raise DomainError(f"M must be at least 1, got {M}")
    if replacement:
        if isinstance(source, UniformSymmetricSampler):
            return source.sample(M + 1, rng)
        return sample_iid(as_distribution(source), M + 1, rng)
    if isinstance(source, UniformSymmetricSampler):
        raise DomainError("sampling without replacement needs an explicit permutation set")
    dist = as_distribution(source)
    if not dist.is_uniform():
        raise DomainError("sampling without replacement is only defined for uniform weights")
    if M + 1 > dist.size:
        raise DomainError(f"cannot draw M+1={M + 1} permutations without replacement from {dist.size}")
    return sample_without_replacement(dist.perms, M + 1, rng)


def pvalue_sampled(x, stat: Statistic, source: PermSource, M: int, replacement: bool = True,
                   rng: Optional[RngStream] = None, draws: Optional[Sequence[Perm]] = None) -> TestReport:
    """
    sigma_0..sigma_M drawn i.i.d. from q (replacement=True) or uniformly without
    replacement from S; P = (1 + sum_m 1{T(x_{sigma_m o sigma_0^-1}) >= T(x)}) / (1 + M).
    `draws` forces the sample (tests only).
    """
    method = Method.SAMPLED_IID if replacement else Method.SAMPLED_NOREPLACE
    if draws is None:
        if rng is None:
            raise DomainError("a seeded RngStream is required for sampled p-values")
        draws = draw_sampled(source, M, replacement, rng)
    draws = list(draws)
    if len(draws) != M + 1:
        raise DomainError(f"expected M+1={M + 1} draws, got {len(draws)}")
    cache = ScoreCache(x, stat)
    _check_n(cache.x, draws[0].n)
    value = anchored_count_pvalue(cache, draws)
    weight_total = source.raw_total if isinstance(source, PermDistribution) else None
    return _base_report(method, cache, value, M=M, seed=rng.seed if rng is not None else None,
                        anchor=draws[0], support_size=_support_size(source), draws=draws,
                        weight_total=weight_total)


def pvalue_sampled_subgroup(x, stat: Statistic, group: Sequence[Perm], M: int, replacement: bool = True,
                            rng: Optional[RngStream] = None,
                            draws: Optional[Sequence[Perm]] = None) -> TestReport:
    """
    Classic Monte Carlo test from a subgroup G, no anchor:
    P = (1 + sum_{m=1}^M 1{T(x_{sigma_m}) >= T(x)}) / (1 + M).
    """
    group = list(group)
    if not is_subgroup(group):
        raise DomainError("the anchor-free sampled test needs a subgroup; use sampled-iid for a general set")
    if draws is None:
        if rng is None:
            raise DomainError("a seeded RngStream is required for sampled p-values")
        if replacement:
            draws = sample_iid(uniform_on(group), M, rng)
        else:
            if M > len(group):
                raise DomainError(f"cannot draw M={M} permutations without replacement from {len(group)}")
            draws = sample_without_replacement(group, M, rng)
    draws = list(draws)
    cache = ScoreCache(x, stat)
    _check_n(cache.x, group[0].n)
    value = (1 + sum(cache.hit(p) for p in draws)) / (1 + M)
    return _base_report(Method.SAMPLED_SUBGROUP, cache, value, M=M, seed=rng.seed if rng is not None else None,
                        support_size=len(group), draws=draws)


def pvalue_exchangeable(x, stat: Statistic, perms: Sequence[Perm]) -> TestReport:
    """
    P = sum_{m=0}^M 1{T(x_{sigma_m o sigma_0^-1}) >= T(x)} / (1 + M); slot 0 is sigma_0.
    The caller warrants that the list is an exchangeable draw.
    """
    perms = list(perms)
    if not perms:
        raise DomainError("exchangeable p-value needs at least one permutation")
    cache = ScoreCache(x, stat)
    _check_n(cache.x, perms[0].n)
    hits = anchored_hits(cache, perms, perms[0])
    return _base_report(Method.EXCHANGEABLE, cache, sum(hits) / len(perms), M=len(perms) - 1,
                        anchor=perms[0], draws=perms)


def pbar_exhaustive(x, stat: Statistic, q: PermSource) -> TestReport:
    """sum_{sigma, sigma_0} q(sigma) q(sigma_0) 1{T(x_{sigma o sigma_0^-1}) >= T(x)}; no internal randomness"""
    q = as_distribution(q)
    cache = ScoreCache(x, stat)
    _check_n(cache.x, q.n)
    numerator = 0
    for sigma0, w0 in zip(q.perms, q.numerators):
        hits = anchored_hits(cache, q.perms, sigma0)
        numerator += w0 * sum(num for num, hit in zip(q.numerators, hits) if hit)
    value = numerator / (q.denominator * q.denominator)
    return _base_report(Method.PBAR_EXHAUSTIVE, cache, value, support_size=q.size, weight_total=q.raw_total)


def pbar_sampled(x, stat: Statistic, q: PermSource, M: int, rng: Optional[RngStream] = None,
                 draws: Optional[Sequence[Perm]] = None) -> TestReport:
    """sum_{m, m'} 1{T(x_{sigma_m o sigma_m'^-1}) >= T(x)} / (1 + M)^2 over i.i.d. draws"""
    if M < 1:
        raise DomainError(f"M must be at least 1, got {M}")
    if draws is None:
        if rng is None:
            raise DomainError("a seeded RngStream is required for sampled p-values")
        draws = draw_sampled(q, M, True, rng)
    draws = list(draws)
    cache = ScoreCache(x, stat)
    _check_n(cache.x, draws[0].n)
    # repeated draws share their indicators, so count over distinct pairs with multiplicity
    multiplicity = Counter(draws)
    distinct = list(multiplicity)
    count = 0
    for anchor in distinct:
        hits = anchored_hits(cache, distinct, anchor)
        count += multiplicity[anchor] * sum(multiplicity[p] for p, hit in zip(distinct, hits) if hit)
    value = count / (len(draws) ** 2)
    return _base_report(Method.PBAR_SAMPLED, cache, value, M=M, seed=rng.seed if rng is not None else None,
                        support_size=_support_size(q), draws=draws)


def evalue_from_differences(diffs: Sequence[float]) -> tuple:
    """
    E = (M+1) / sum_m exp(d_m) and 1/E, with d_m = T(x_{sigma_m o sigma_0^-1}) - T(x).
    The m=0 term is exp(0), so the sum is at least 1.
    """
    d = np.asarray(diffs, dtype=float)
    size = d.shape[0]
    peak = float(d.max())
    if peak <= EXP_SAFE_LIMIT:
        total = float(np.sum(np.exp(d)))
        return size / total, total / size
    log_total = peak + math.log(float(np.sum(np.exp(d - peak))))
    log_e = math.log(size) - log_total
    reciprocal = math.exp(-log_e) if -log_e < 709.0 else math.inf
    return math.exp(log_e), reciprocal


def evalue(x, stat: Statistic, perms: Sequence[Perm]) -> TestReport:
    """Permutation e-value over an exchangeable list; the report also carries 1/E"""
    perms = list(perms)
    if not perms:
        raise DomainError("e-value needs at least one permutation")
    cache = ScoreCache(x, stat)
    _check_n(cache.x, perms[0].n)
    anchor_inv = inverse(perms[0])
    diffs = [cache.score(compose(p, anchor_inv)) - cache.observed for p in perms]
    value, reciprocal = evalue_from_differences(diffs)
    return _base_report(Method.EVALUE, cache, value, M=len(perms) - 1, anchor=perms[0],
                        draws=perms, reciprocal=reciprocal)


def randomization_pvalue(assigned: Perm, x, stat: Statistic, perms: Sequence[Perm]) -> TestReport:
    """
    P = #{sigma in S : T(x_sigma) >= T(x_assigned)} / |S| for an assignment drawn
    uniformly from S by the study design.
    """
    perms = list(perms)
    if assigned not in set(perms):
        raise DomainError(f"assigned permutation {assigned} is not in the design set")
    cache = ScoreCache(x, stat)
    _check_n(cache.x, assigned.n)
    observed = cache.score(assigned)
    hits = sum(cache.score(p) >= observed for p in perms)
    report = _base_report(Method.RANDOMIZATION, cache, hits / len(perms), anchor=assigned,
                          support_size=len(perms))
    report.statistic_value = observed
    return report


def harrison_check(weights: Sequence, scores: Sequence[float], alpha) -> bool:
    """
    Deterministic inequality
        sum_k w_k 1{ sum_i w_i 1{t_i >= t_k} <= alpha } <= alpha,
    evaluated in exact integer arithmetic.
    """
    if len(weights) != len(scores):
        raise DimensionError("weights and scores differ in length")
    exact = [Fraction(w) for w in weights]
    a = Fraction(alpha)
    if any(w < 0 for w in exact) or a < 0:
        raise DomainError("weights and alpha must be nonnegative")
    scale = math.lcm(a.denominator, *(w.denominator for w in exact))
    w_int = [w.numerator * (scale // w.denominator) for w in exact]
    a_int = a.numerator * (scale // a.denominator)

    lhs = 0
    for k, t_k in enumerate(scores):
        tail = sum(w for w, t in zip(w_int, scores) if t >= t_k)
        if tail <= a_int:
            lhs += w_int[k]
    return lhs <= a_int


@dataclass(frozen=True)
class MethodSpec:
    """
    A p-value construction together with its internal randomness, as used by
    the oracle and the calibration harness.

    EXCHANGEABLE here means a uniformly random ordering of the listed support;
    RANDOMIZATION draws the assignment uniformly from the support.
    """
    method: Method
    source: PermSource
    M: int = 0
    steps: int = 1

    def __post_init__(self):
        if self.method in (Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE, Method.PBAR_SAMPLED,
                           Method.BESAG_CLIFFORD, Method.SAMPLED_SUBGROUP) and self.M < 1:
            raise DomainError(f"{self.method.value} needs M >= 1")
        if self.steps < 1:
            raise DomainError(f"steps must be at least 1, got {self.steps}")

    @property
    def factor(self) -> int:
        """Validity factor: 2 for averaged p-values"""
        return 2 if self.method in (Method.PBAR_EXHAUSTIVE, Method.PBAR_SAMPLED) else 1

    def evaluate(self, x, stat: Statistic, rng: Optional[RngStream]) -> TestReport:
        method = self.method
        if method == Method.NAIVE:
            return pvalue_naive(x, stat, as_distribution(self.source).perms)
        if method == Method.EXHAUSTIVE:
            return pvalue_exhaustive(x, stat, self.source, rng)
        if method == Method.SAMPLED_IID:
            return pvalue_sampled(x, stat, self.source, self.M, True, rng)
        if method == Method.SAMPLED_NOREPLACE:
            return pvalue_sampled(x, stat, self.source, self.M, False, rng)
        if method == Method.SAMPLED_SUBGROUP:
            return pvalue_sampled_subgroup(x, stat, as_distribution(self.source).perms, self.M, True, rng)
        if method == Method.EXCHANGEABLE:
            perms = as_distribution(self.source).perms
            ordering = sample_without_replacement(perms, len(perms), rng)
            return pvalue_exchangeable(x, stat, ordering)
        if method == Method.PBAR_EXHAUSTIVE:
            return pbar_exhaustive(x, stat, self.source)
        if method == Method.PBAR_SAMPLED:
            return pbar_sampled(x, stat, self.source, self.M, rng)
        if method == Method.RANDOMIZATION:
            perms = as_distribution(self.source).perms
            assigned = sample_iid(uniform_on(perms), 1, rng)[0]
            return randomization_pvalue(assigned, x, stat, perms)
        if method == Method.EVALUE:
            return evalue(x, stat, sample_iid(as_distribution(self.source), self.M + 1, rng))
        if method == Method.BESAG_CLIFFORD:
            from services.mcmc_service import PermutationKernel, bc_pvalue
            kernel = PermutationKernel(as_distribution(self.source))
            return bc_pvalue(as_data_vec(x), self.M, self.steps, kernel, stat, rng)
        raise DomainError(f"unsupported method {method}")
