"""
Tests for the hub-and-spoke exchangeable sampler and the Besag-Clifford p-value
"""
import numpy as np
import pytest

from conftest import perm
from services.errors import DomainError
from services.permutation_service import Perm, apply, inverse
from services.distribution_service import PermDistribution, RngStream, point_mass, uniform_on
from services.statistics_service import sum_first_k
from services.testing_engine import pvalue_sampled
from services.mcmc_service import IdentityKernel, PermutationKernel, bc_draws, bc_pvalue

CYCLE = perm(2, 3, 4, 1)


def test_identity_kernel(ex1_values, sum2):
    draws = bc_draws(np.array(ex1_values), 5, 3, IdentityKernel(), RngStream(1))
    assert draws.hidden.tolist() == list(ex1_values)
    assert all(s.tolist() == list(ex1_values) for s in draws.siblings)
    assert draws.hidden_label is None

    report = bc_pvalue(np.array(ex1_values), 5, 3, IdentityKernel(), sum2, RngStream(1))
    assert report.value == 1.0
    assert report.draws is None


def test_point_mass_kernel(ex1_values):
    x = np.array(ex1_values)
    draws = bc_draws(x, 3, 1, PermutationKernel(point_mass(CYCLE)), RngStream(2))
    assert draws.hidden.tolist() == apply(x, inverse(CYCLE)).tolist()
    assert draws.hidden_label == CYCLE
    for sibling in draws.siblings:
        assert sibling.tolist() == x.tolist()


def test_backward_applies_the_inverse(ex1_values):
    x = np.array(ex1_values)
    kernel = PermutationKernel(point_mass(CYCLE))
    step = kernel.backward(x, RngStream(3))
    assert step.state.tolist() == apply(x, inverse(CYCLE)).tolist()
    assert kernel.forward(step.state, RngStream(3)).state.tolist() == x.tolist()


def test_multi_step_labels(ex1_values):
    x = np.array(ex1_values)
    kernel = PermutationKernel(point_mass(CYCLE))
    hidden = kernel.backward_steps(x, 2, RngStream(4))
    # two backward quarter turns
    assert hidden.state.tolist() == apply(x, perm(3, 4, 1, 2)).tolist()
    assert hidden.label == perm(3, 4, 1, 2)
    moved = kernel.forward_steps(hidden.state, 2, RngStream(4))
    assert moved.state.tolist() == x.tolist()


def test_bc_draws_validate(ex1_values, ex1_set):
    kernel = PermutationKernel(uniform_on(ex1_set))
    with pytest.raises(DomainError):
        bc_draws(np.array(ex1_values), 0, 1, kernel, RngStream(1))
    with pytest.raises(DomainError):
        bc_draws(np.array(ex1_values), 2, 0, kernel, RngStream(1))


def test_single_step_matches_sampled_iid():
    rng = np.random.default_rng(31)
    for config in range(1000):
        n = int(rng.integers(2, 6))
        x = rng.normal(size=n)
        size = int(rng.integers(1, 5))
        support = list({Perm(tuple(rng.permutation(n) + 1)) for _ in range(size)})
        q = PermDistribution.from_weights(support, rng.integers(1, 5, size=len(support)).tolist())
        stat = sum_first_k(int(rng.integers(1, n + 1)))
        M = int(rng.integers(1, 6))

        bc = bc_pvalue(x, M, 1, PermutationKernel(q), stat, RngStream(config))
        sampled = pvalue_sampled(x, stat, q, M, replacement=True, rng=RngStream(config))

        assert bc.value == sampled.value
        assert bc.anchor == sampled.anchor
        assert bc.draws == sampled.draws
        for name in ('statistic', 'statistic_value', 'n', 'M', 'seed', 'support_size', 'weight_total',
                     'reciprocal', 'warning'):
            assert getattr(bc, name) == getattr(sampled, name), name
        assert bc.method == 'besag-clifford'


@pytest.mark.parametrize('steps', [1, 2])
def test_observed_and_siblings_are_exchangeable(ex1_set, steps):
    """Under an exchangeable null the scores of Z, Z_1 and Z_2 have the same joint law in any order"""
    kernel = PermutationKernel(PermDistribution.from_weights(ex1_set, [1, 2, 1]))
    stat = sum_first_k(2)
    reps = 20_000
    above = np.zeros((3, 3))
    for r in range(reps):
        rng = RngStream(500 + steps, r)
        z = rng.normal(4)
        draws = bc_draws(z, 2, steps, kernel, rng)
        scores = [stat(z)] + [stat(s) for s in draws.siblings]
        for i in range(3):
            for j in range(3):
                above[i, j] += scores[i] > scores[j]
    freq = above / reps
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(freq[i, j] - freq[j, i]) < 0.03


def test_bc_report(ex1_values, ex1_set, sum2):
    q = uniform_on(ex1_set)
    report = bc_pvalue(np.array(ex1_values), 4, 2, PermutationKernel(q), sum2, RngStream(8))
    assert report.method == 'besag-clifford'
    assert report.seed == 8
    assert len(report.draws) == 5
    assert report.anchor == report.draws[0]
    assert report.support_size == 3
    assert report.value * 5 == pytest.approx(round(report.value * 5))
