"""
Tests for the exact-law oracle and the validity audit
"""
from fractions import Fraction

import numpy as np
import pytest

from conftest import perm
from services.errors import CapacityError, DomainError
from services.permutation_service import Perm, full_group, generate_subgroup
from services.distribution_service import PermDistribution, convolve, uniform_on
from services.statistics_service import sum_first_k
from services.testing_engine import (
    Method,
    MethodSpec,
    pbar_exhaustive,
    pbar_sampled,
    pvalue_exchangeable,
    pvalue_exhaustive,
    pvalue_naive,
    pvalue_sampled,
    pvalue_sampled_subgroup,
    randomization_pvalue,
)
from services.oracle_service import (
    ExactDistribution,
    assignments,
    enumerate_outcomes,
    exact_e_expectation,
    exact_p_distribution,
    validity_audit,
)

F = Fraction


def _spec(method, source, M=0, steps=1):
    return MethodSpec(method, source, M=M, steps=steps)


def test_naive_law_fails_audit(ex1_values, ex1_set, sum2):
    dist = exact_p_distribution(ex1_values, sum2, _spec(Method.NAIVE, ex1_set))
    assert dist.atoms == {F(1, 3): F(1, 2), F(1): F(1, 2)}
    audit = validity_audit(dist)
    assert not audit.passed
    assert audit.failures == [F(1, 3)]
    assert audit.worst_alpha == F(1, 3) and audit.worst_cdf == F(1, 2)
    assert audit.worst_excess == F(1, 6)


def test_corrected_law_passes_audit(ex1_values, ex1_set, sum2):
    dist = exact_p_distribution(ex1_values, sum2, _spec(Method.EXHAUSTIVE, ex1_set))
    assert dist.atoms == {F(1, 3): F(1, 6), F(2, 3): F(1, 3), F(1): F(1, 2)}
    assert validity_audit(dist).passed
    assert dist.to_dict()['atoms'] == {'1/3': '1/6', '2/3': '1/3', '1/1': '1/2'}


def test_pbar_law_passes_with_factor_two(ex1_values, ex1_set, sum2):
    spec = _spec(Method.PBAR_EXHAUSTIVE, ex1_set)
    dist = exact_p_distribution(ex1_values, sum2, spec)
    assert dist.atoms == {F(5, 9): F(1, 2), F(1): F(1, 2)}
    assert dist.factor == 2
    assert validity_audit(dist, spec.factor).passed


def test_exact_distribution_contract():
    with pytest.raises(DomainError):
        ExactDistribution({F(1, 2): F(1, 3)})
    with pytest.raises(DomainError):
        ExactDistribution({})
    dist = ExactDistribution.from_law({F(1): F(1, 2), F(1, 3): F(1, 2), F(2, 3): F(0)})
    assert dist.values == [F(1, 3), F(1)]
    assert dist.cdf(F(1, 2)) == F(1, 2)
    assert dist.cdf(0) == 0
    assert dist.expectation() == F(2, 3)
    with pytest.raises(DomainError):
        validity_audit(dist, factor=3)


def test_assignments_respect_ties():
    law = dict(assignments((0.0, 0.0, 1.0)))
    assert law == {(0.0, 0.0, 1.0): F(1, 3), (0.0, 1.0, 0.0): F(1, 3), (1.0, 0.0, 0.0): F(1, 3)}
    assert sum(p for _, p in assignments((1.0, 2.0, 3.0, 4.0))) == 1


def _example_specs(ex1_set, klein):
    weighted = PermDistribution.from_weights(ex1_set, [1, 2, 1])
    return [
        _spec(Method.NAIVE, ex1_set),
        _spec(Method.EXHAUSTIVE, ex1_set),
        _spec(Method.EXHAUSTIVE, weighted),
        _spec(Method.SAMPLED_IID, ex1_set, M=2),
        _spec(Method.SAMPLED_IID, weighted, M=2),
        _spec(Method.SAMPLED_NOREPLACE, ex1_set, M=2),
        _spec(Method.SAMPLED_SUBGROUP, klein, M=2),
        _spec(Method.EXCHANGEABLE, ex1_set),
        _spec(Method.PBAR_EXHAUSTIVE, weighted),
        _spec(Method.PBAR_SAMPLED, ex1_set, M=2),
        _spec(Method.RANDOMIZATION, ex1_set),
        _spec(Method.BESAG_CLIFFORD, weighted, M=2, steps=1),
        _spec(Method.BESAG_CLIFFORD, ex1_set, M=1, steps=2),
    ]


def test_brute_force_matches_collapsed(ex1_values, ex1_set, klein, sum2):
    for spec in _example_specs(ex1_set, klein):
        collapsed = exact_p_distribution(ex1_values, sum2, spec)
        brute = exact_p_distribution(ex1_values, sum2, spec, brute_force=True)
        assert collapsed == brute, spec.method


def _engine_value(spec: MethodSpec, x, stat, draws) -> float:
    method = spec.method
    source = spec.source
    if method == Method.NAIVE:
        return pvalue_naive(x, stat, uniform_on(source).perms).value
    if method == Method.EXHAUSTIVE:
        return pvalue_exhaustive(x, stat, source, anchor=draws[0]).value
    if method in (Method.SAMPLED_IID, Method.SAMPLED_NOREPLACE):
        return pvalue_sampled(x, stat, source, spec.M, replacement=method == Method.SAMPLED_IID,
                              draws=draws).value
    if method == Method.SAMPLED_SUBGROUP:
        return pvalue_sampled_subgroup(x, stat, source, spec.M, draws=draws).value
    if method == Method.EXCHANGEABLE:
        return pvalue_exchangeable(x, stat, draws).value
    if method == Method.PBAR_EXHAUSTIVE:
        return pbar_exhaustive(x, stat, source).value
    if method == Method.PBAR_SAMPLED:
        return pbar_sampled(x, stat, source, spec.M, draws=draws).value
    if method == Method.RANDOMIZATION:
        return randomization_pvalue(draws[0], x, stat, source).value
    if method == Method.BESAG_CLIFFORD:
        # hidden label plus sibling moves behave as i.i.d. draws from the s-step law
        law = convolve(source if isinstance(source, PermDistribution) else uniform_on(source), spec.steps)
        return pvalue_sampled(x, stat, law, spec.M, draws=draws).value
    raise AssertionError(method)


def test_engine_agrees_with_definition(ex1_values, ex1_set, klein, sum2):
    for spec in _example_specs(ex1_set, klein):
        for outcome in enumerate_outcomes(ex1_values, sum2, spec):
            engine = _engine_value(spec, np.array(outcome.x), sum2, list(outcome.draws))
            assert engine == pytest.approx(float(outcome.value), abs=1e-12), spec.method


def test_outcome_probabilities_sum_to_one(ex1_values, ex1_set, klein, sum2):
    for spec in _example_specs(ex1_set, klein):
        assert sum(o.prob for o in enumerate_outcomes(ex1_values, sum2, spec)) == 1


def _random_config(rng: np.random.Generator):
    n = int(rng.integers(3, 6))
    values = tuple(float(v) for v in rng.integers(-2, 3, size=n))
    group = full_group(n)
    size = int(rng.integers(2, min(5, len(group)) + 1))
    picks = rng.choice(len(group), size=size, replace=False)
    support = [group[int(i)] for i in picks]
    q = PermDistribution.from_weights(support, rng.integers(1, 6, size=size).tolist())
    k = int(rng.integers(1, n))
    M = int(rng.integers(1, 4))
    return values, support, q, sum_first_k(k), M


def _sweep_specs(support, q, M):
    specs = [
        _spec(Method.EXHAUSTIVE, q),
        _spec(Method.SAMPLED_IID, q, M=M),
        _spec(Method.SAMPLED_NOREPLACE, support, M=min(M, len(support) - 1)),
        _spec(Method.EXCHANGEABLE, support),
        _spec(Method.RANDOMIZATION, support),
        _spec(Method.BESAG_CLIFFORD, q, M=M, steps=1),
        _spec(Method.BESAG_CLIFFORD, q, M=min(M, 2), steps=2),
        _spec(Method.PBAR_EXHAUSTIVE, q),
        _spec(Method.PBAR_SAMPLED, q, M=M),
    ]
    return specs


def _sweep_configs(count: int):
    rng = np.random.default_rng(20240607)
    example = ((1.0, 2.0, -0.5, 0.3), [perm(1, 2, 3, 4), perm(3, 4, 1, 2), perm(4, 3, 2, 1)])
    configs = [(example[0], example[1], uniform_on(example[1]), sum_first_k(2), 2)]
    configs += [_random_config(rng) for _ in range(count - 1)]
    return configs


def _validity_sweep(count: int):
    naive_failures = 0
    for values, support, q, stat, M in _sweep_configs(count):
        for spec in _sweep_specs(support, q, M):
            audit = validity_audit(exact_p_distribution(values, stat, spec), spec.factor)
            assert audit.passed, (spec.method, values, [str(p) for p in support])
        naive = validity_audit(exact_p_distribution(values, stat, _spec(Method.NAIVE, support)))
        naive_failures += not naive.passed
    # the naive construction is the negative control
    assert naive_failures >= 1


def test_validity_sweep_quick():
    _validity_sweep(8)


@pytest.mark.slow
def test_validity_sweep_full():
    _validity_sweep(50)


def test_naive_is_valid_on_subgroups(klein, s3_in_4):
    cyclic = sorted(generate_subgroup([perm(2, 3, 4, 1)]))
    for group in (klein, s3_in_4, cyclic):
        for values in ((1.0, 2.0, -0.5, 0.3), (0.0, 0.0, 1.0, 1.0)):
            for k in (1, 2, 3):
                dist = exact_p_distribution(values, sum_first_k(k), _spec(Method.NAIVE, group))
                assert validity_audit(dist).passed


def test_sampled_subgroup_requires_a_subgroup(ex1_values, ex1_set, sum2):
    with pytest.raises(DomainError):
        exact_p_distribution(ex1_values, sum2, _spec(Method.SAMPLED_SUBGROUP, ex1_set, M=2))
    with pytest.raises(DomainError):
        list(enumerate_outcomes(ex1_values, sum2, _spec(Method.SAMPLED_SUBGROUP, ex1_set, M=2)))


def test_evalue_has_no_p_value_law(ex1_values, ex1_set, sum2):
    with pytest.raises(DomainError):
        exact_p_distribution(ex1_values, sum2, _spec(Method.EVALUE, ex1_set, M=1))
    with pytest.raises(DomainError):
        list(enumerate_outcomes(ex1_values, sum2, _spec(Method.EVALUE, ex1_set, M=1)))


def test_e_value_expectation():
    s3 = full_group(3)
    assert exact_e_expectation((1.0, 1.0, 1.0), sum_first_k(1), s3, 2) == 1
    assert exact_e_expectation((0.0, 1.0), sum_first_k(1), [perm(1, 2), perm(2, 1)], 1) <= 1 + F(1, 10 ** 12)
    assert exact_e_expectation((0.0, 1.0), sum_first_k(1), [perm(1, 2), perm(2, 1)], 0) == 1


def test_e_value_expectation_sweep(ex1_values, ex1_set, sum2):
    assert exact_e_expectation(ex1_values, sum2, ex1_set, 1) <= 1 + F(1, 10 ** 12)
    rng = np.random.default_rng(99)
    for _ in range(10):
        values, _, q, stat, M = _random_config(rng)
        expectation = exact_e_expectation(values, stat, q, min(M, 2))
        assert 0 < expectation <= 1 + F(1, 10 ** 12)


@pytest.mark.slow
def test_e_value_expectation_full_sweep():
    for values, _, q, stat, _ in _sweep_configs(50):
        for M in (1, 2):
            expectation = exact_e_expectation(values, stat, q, M)
            assert 0 < expectation <= 1 + F(1, 10 ** 12), (values, M)


def test_capacity_limits():
    s3 = full_group(3)
    with pytest.raises(CapacityError):
        assignments(tuple(float(i) for i in range(9)))
    with pytest.raises(CapacityError):
        exact_p_distribution((1.0, 2.0, 3.0), sum_first_k(1), _spec(Method.SAMPLED_IID, s3, M=10))
    with pytest.raises(CapacityError):
        exact_e_expectation((1.0, 2.0, 3.0), sum_first_k(1), s3, 10)
