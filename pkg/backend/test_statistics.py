"""
Tests for the built-in test statistics
"""
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import perm
from services.errors import DegenerateStatisticError, DimensionError, DomainError
from services.permutation_service import apply, full_group
from services.statistics_service import Statistic, abs_corr, diff_means, parse_selector, sum_first_k

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def test_sum_first_k_examples(ex1_values, sum2):
    assert sum2(ex1_values) == 3.0
    assert sum2(apply(np.array(ex1_values), perm(3, 4, 1, 2))) == pytest.approx(-0.2)
    assert sum2.name == 'sum-first-k:2'


def test_sum_first_k_errors():
    with pytest.raises(DomainError):
        sum_first_k(0)
    with pytest.raises(DimensionError):
        sum_first_k(5)([1.0, 2.0])


@given(st.lists(finite, min_size=1, max_size=6))
def test_sum_of_everything_is_permutation_invariant(values):
    stat = sum_first_k(len(values))
    observed = stat(values)
    for p in full_group(len(values))[:24]:
        assert stat(apply(np.array(values), p)) == observed


def test_abs_corr_examples():
    stat = abs_corr().bind([1.0, 2.0, 3.0])
    assert stat([1.0, 2.0, 3.0]) == pytest.approx(1.0)
    assert stat([3.0, 2.0, 1.0]) == pytest.approx(1.0)
    assert abs_corr().bind([1.0, 3.0, 2.0, 4.0])([1.0, 2.0, 3.0, 4.0]) == pytest.approx(0.8)


def test_abs_corr_needs_covariate():
    with pytest.raises(DomainError):
        abs_corr()([1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        abs_corr().bind([1.0, 2.0])([1.0, 2.0, 3.0])


def test_abs_corr_degenerate():
    with pytest.raises(DegenerateStatisticError):
        abs_corr().bind([1.0, 2.0, 3.0])([5.0, 5.0, 5.0])
    with pytest.raises(DegenerateStatisticError):
        abs_corr().bind([0.0, 0.0, 0.0])([1.0, 2.0, 3.0])
    for constant in ([0.1, 0.1, 0.1], [1 / 3, 1 / 3, 1 / 3]):
        with pytest.raises(DegenerateStatisticError):
            abs_corr().bind([0.1, 0.2, 0.7])(constant)
        with pytest.raises(DegenerateStatisticError):
            abs_corr().bind(constant)([1.0, 2.0, 3.0])


@given(st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=8),
       st.floats(min_value=0.5, max_value=10), st.floats(min_value=-10, max_value=10))
def test_abs_corr_affine_invariance(values, scale, shift):
    y = np.arange(len(values), dtype=float)
    x = np.array(values)
    assume(np.ptp(x) > 0.1)
    stat = abs_corr().bind(y)
    assert 0.0 <= stat(x) <= 1.0
    assert stat(scale * x + shift) == pytest.approx(stat(x), abs=1e-7)


def test_diff_means_examples(ex1_values):
    mask = [True, True, False, False]
    stat = diff_means(mask)
    assert stat([2.0, 2.0, 0.0, 0.0]) == 2.0
    assert stat([3.0, 3.0, 3.0, 3.0]) == 0.0
    assert stat(ex1_values) == pytest.approx(1.6)


def test_diff_means_constant_data_unequal_groups():
    stat = diff_means([True, True, True, False, False])
    assert stat([0.1] * 5) == 0.0
    assert stat([1 / 3] * 5) == 0.0
    assert stat([0.1, 0.1, 0.1, 0.0, 0.0]) == pytest.approx(0.1)


def test_diff_means_errors():
    with pytest.raises(DomainError):
        diff_means([True, True])
    with pytest.raises(DomainError):
        diff_means([False, False, False])
    with pytest.raises(DimensionError):
        diff_means([True, False])([1.0, 2.0, 3.0])


def test_statistics_are_pure(ex1_values):
    x = np.array(ex1_values)
    before = x.copy()
    stats = [sum_first_k(2), abs_corr().bind([4.0, 1.0, 3.0, 2.0]), diff_means([True, False, True, False])]
    for stat in stats:
        assert stat(x) == stat(x)
    assert x.tolist() == before.tolist()


def test_nan_output_is_rejected():
    stat = Statistic(name='nan', fn=lambda x: float('nan'))
    with pytest.raises(DegenerateStatisticError):
        stat([1.0, 2.0])


def test_bound_covariate_is_read_only():
    stat = abs_corr().bind([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        stat.covariate[0] = 9.0


def test_parse_selector():
    assert parse_selector('sum-first-k:3').name == 'sum-first-k:3'
    assert parse_selector('abs-corr').needs_covariate
    assert parse_selector('diff-means', mask=[True, False]).name == 'diff-means'
    with pytest.raises(DomainError):
        parse_selector('sum-first-k:two')
    with pytest.raises(DomainError):
        parse_selector('diff-means')
    with pytest.raises(DomainError):
        parse_selector('median')
