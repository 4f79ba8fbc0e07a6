from __future__ import annotations
"""
Runner Service - one entry point per user-facing operation

Shared by the command-line tool and the HTTP API: resolves the permutation
source, the statistic and the seed, dispatches to the engine, the MCMC module,
the oracle or the calibration harness, and logs each run.
"""
import os
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.errors import DomainError, PermkitError
from services.permutation_service import (
    DEFAULT_SUBGROUP_CAP,
    MAX_FULL_GROUP_N,
    Perm,
    as_data_vec,
    full_group,
    generate_subgroup,
    sort_lexicographic,
)
from services.distribution_service import (
    PermDistribution,
    PermSource,
    RngStream,
    UniformSymmetricSampler,
    as_distribution,
)
from services.statistics_service import Statistic, parse_selector
from services.testing_engine import (
    Method,
    MethodSpec,
    NAIVE_WARNING,
    TestReport,
    draw_sampled,
    evalue,
    pbar_exhaustive,
    pbar_sampled,
    pvalue_exchangeable,
    pvalue_exhaustive,
    pvalue_naive,
    pvalue_sampled,
    pvalue_sampled_subgroup,
    randomization_pvalue,
)
from services.mcmc_service import PermutationKernel, bc_pvalue
from services.oracle_service import (
    exact_e_expectation,
    exact_p_distribution,
    fraction_str,
    validity_audit,
)
from services.calibration_service import (
    CALIBRATION_CHUNK,
    CALIBRATION_WORKERS,
    CalibrationConfig,
    CalibrationCurve,
    mc_calibrate,
)

logger = logging.getLogger(__name__)

# methods that take M >= 1 sampled permutations
SAMPLED_M_METHODS = {Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE, Method.SAMPLED_SUBGROUP,
                     Method.PBAR_SAMPLED, Method.BESAG_CLIFFORD}


def _env_seed() -> Optional[int]:
    value = os.getenv('DEFAULT_SEED')
    return int(value) if value not in (None, '') else None


def build_source(perms: Optional[Sequence[Perm]] = None, dist: Optional[PermDistribution] = None,
                 generators: Optional[Sequence[Perm]] = None, full_n: Optional[int] = None,
                 uniform_sn: Optional[int] = None, n: Optional[int] = None,
                 cap: int = DEFAULT_SUBGROUP_CAP, max_full_n: int = MAX_FULL_GROUP_N) -> Tuple[str, PermSource]:
    """Exactly one permutation source; returns (kind, source)"""
    given = {
        'perms': perms is not None,
        'dist': dist is not None,
        'generators': generators is not None,
        'full': full_n is not None,
        'uniform-sn': uniform_sn is not None,
    }
    chosen = [kind for kind, present in given.items() if present]
    if len(chosen) != 1:
        raise DomainError(f"exactly one permutation source is required, got {len(chosen)}"
                          f"{': ' + ', '.join(chosen) if chosen else ''}")
    kind = chosen[0]
    if kind == 'perms':
        return kind, list(perms)
    if kind == 'dist':
        return kind, dist
    if kind == 'generators':
        return kind, sort_lexicographic(generate_subgroup(list(generators), cap=cap, n=n))
    if kind == 'full':
        return kind, full_group(full_n, max_n=max_full_n)
    return kind, UniformSymmetricSampler(uniform_sn)


def build_statistic(selector: str, y: Optional[np.ndarray] = None, mask: Optional[np.ndarray] = None) -> Statistic:
    stat = parse_selector(selector, mask=mask)
    if stat.needs_covariate:
        if y is None:
            raise DomainError(f"statistic {stat.name} needs a covariate column y")
        stat = stat.bind(y)
    return stat


def listed_perms(source: PermSource) -> List[Perm]:
    if isinstance(source, UniformSymmetricSampler):
        raise DomainError("this method needs an explicit permutation list, not the uniform S_n sampler")
    if isinstance(source, PermDistribution):
        return list(source.perms)
    return list(source)


@dataclass
class TestRequest:
    """
    A single test. For exchangeable and evalue, M > 0 draws sigma_0..sigma_M
    i.i.d. from the source with the seed; M == 0 uses the listed permutations
    as given, slot 0 playing sigma_0.
    """
    __test__ = False

    x: np.ndarray
    stat: Statistic
    method: Method
    source: PermSource
    M: int = 0
    steps: int = 1
    seed: Optional[int] = None
    assigned: Optional[Perm] = None


@dataclass
class ExactRequest:
    values: np.ndarray
    stat: Statistic
    method: Method
    source: PermSource
    M: int = 0
    steps: int = 1
    brute_force: bool = False


class PermutationTestRunner:
    def __init__(self):
        self.subgroup_cap = int(os.getenv('SUBGROUP_CAP', DEFAULT_SUBGROUP_CAP))
        self.max_full_n = int(os.getenv('MAX_FULL_GROUP_N', MAX_FULL_GROUP_N))
        self.default_seed = _env_seed()
        self.workers = int(os.getenv('CALIBRATION_WORKERS', CALIBRATION_WORKERS))
        self.chunk = int(os.getenv('CALIBRATION_CHUNK', CALIBRATION_CHUNK))

        logger.debug(f"PermutationTestRunner initialized - subgroup cap: {self.subgroup_cap}, "
                     f"full group up to n={self.max_full_n}, workers: {self.workers}")

    def source(self, **kwargs) -> Tuple[str, PermSource]:
        kwargs.setdefault('cap', self.subgroup_cap)
        kwargs.setdefault('max_full_n', self.max_full_n)
        return build_source(**kwargs)

    def _seed(self, seed: Optional[int]) -> Optional[int]:
        return seed if seed is not None else self.default_seed

    def _rng(self, method: Method, seed: Optional[int]) -> RngStream:
        seed = self._seed(seed)
        if seed is None:
            raise DomainError(f"method {method.value} is randomized and needs a seed")
        return RngStream(seed)

    def run_test(self, request: TestRequest) -> TestReport:
        method = request.method
        x = as_data_vec(request.x)
        stat = request.stat
        source = request.source
        M = request.M

        if method in SAMPLED_M_METHODS and M < 1:
            raise DomainError(f"method {method.value} needs M >= 1")
        if M < 0:
            raise DomainError(f"M must be nonnegative, got {M}")
        logger.info(f"Running {method.value} test: n={x.shape[0]}, statistic={stat.name}, M={M}")

        try:
            if method == Method.NAIVE:
                report = pvalue_naive(x, stat, listed_perms(source))
                logger.warning(f"naive p-value: {NAIVE_WARNING}")
            elif method == Method.EXHAUSTIVE:
                report = pvalue_exhaustive(x, stat, source, self._rng(method, request.seed))
            elif method in (Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE):
                report = pvalue_sampled(x, stat, source, M, replacement=method == Method.SAMPLED_IID,
                                        rng=self._rng(method, request.seed))
            elif method == Method.SAMPLED_SUBGROUP:
                report = pvalue_sampled_subgroup(x, stat, listed_perms(source), M,
                                                 rng=self._rng(method, request.seed))
            elif method in (Method.EXCHANGEABLE, Method.EVALUE):
                construct = pvalue_exchangeable if method == Method.EXCHANGEABLE else evalue
                if M > 0:
                    rng = self._rng(method, request.seed)
                    report = construct(x, stat, draw_sampled(source, M, True, rng))
                    report.seed = rng.seed
                else:
                    report = construct(x, stat, listed_perms(source))
            elif method == Method.PBAR_EXHAUSTIVE:
                report = pbar_exhaustive(x, stat, source)
            elif method == Method.PBAR_SAMPLED:
                report = pbar_sampled(x, stat, source, M, rng=self._rng(method, request.seed))
            elif method == Method.RANDOMIZATION:
                if request.assigned is None:
                    raise DomainError("the randomization test needs the assigned permutation")
                report = randomization_pvalue(request.assigned, x, stat, listed_perms(source))
            elif method == Method.BESAG_CLIFFORD:
                kernel = PermutationKernel(as_distribution(source))
                report = bc_pvalue(x, M, request.steps, kernel, stat, self._rng(method, request.seed))
            else:
                raise DomainError(f"unsupported method {method.value}")
        except PermkitError as e:
            logger.error(f"{method.value} test failed: {e}")
            raise

        label = 'e_value' if report.is_evalue else 'p_value'
        logger.info(f"{method.value} finished: {label}={report.value:.6g}, anchor={report.anchor}")
        return report

    def run_exact(self, request: ExactRequest) -> Dict:
        """Exact law and validity audit, or the exact e-value expectation for evalue"""
        values = as_data_vec(request.values)
        try:
            if request.method == Method.EVALUE:
                expectation = exact_e_expectation(values, request.stat, request.source, request.M)
                return {
                    'method': Method.EVALUE.value,
                    'n': int(values.shape[0]),
                    'M': request.M,
                    'expectation': fraction_str(expectation),
                    'expectation_float': float(expectation),
                    'valid': expectation <= 1 + Fraction(1, 10 ** 12),
                }
            spec = MethodSpec(request.method, request.source, M=request.M, steps=request.steps)
            dist = exact_p_distribution(values, request.stat, spec, brute_force=request.brute_force)
            audit = validity_audit(dist, spec.factor)
        except PermkitError as e:
            logger.error(f"exact enumeration for {request.method.value} failed: {e}")
            raise

        payload = dist.to_dict()
        payload.update({'n': int(values.shape[0]), 'M': request.M, 'audit': audit.to_dict()})
        if request.method == Method.BESAG_CLIFFORD:
            payload['steps'] = request.steps
        return payload

    def run_calibrate(self, config: CalibrationConfig, seed: Optional[int],
                      workers: Optional[int] = None) -> CalibrationCurve:
        seed = self._seed(seed)
        if seed is None:
            raise DomainError("calibration needs a seed")
        try:
            return mc_calibrate(config, RngStream(seed), workers=workers if workers is not None else self.workers,
                                chunk=self.chunk)
        except PermkitError as e:
            logger.error(f"calibration of {config.spec.method.value} failed: {e}")
            raise

    def run_group(self, generators: Sequence[Perm], n: Optional[int] = None,
                  cap: Optional[int] = None) -> List[Perm]:
        """Subgroup closure in lexicographic image order"""
        if not generators and n is None:
            raise DomainError("an empty generator list needs n")
        try:
            group = generate_subgroup(list(generators), cap=cap or self.subgroup_cap, n=n)
        except PermkitError as e:
            logger.error(f"subgroup closure failed: {e}")
            raise
        logger.info(f"Subgroup of order {len(group)} from {len(generators)} generators")
        return sort_lexicographic(group)
