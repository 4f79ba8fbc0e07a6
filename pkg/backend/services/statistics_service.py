"""
Statistics Service - built-in test statistics T and the plug-in contract

A Statistic maps a data vector (plus an optional fixed covariate vector that is
never permuted) to a real score. Comparisons T(x_sigma) >= T(x) elsewhere use
exact floating-point >=, so ties count toward the p-value numerator; callers
wanting randomized tie-breaking must build it into T.
"""
import math
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from services.errors import DegenerateStatisticError, DimensionError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Statistic:
    name: str
    fn: Callable
    needs_covariate: bool = False
    covariate: Optional[np.ndarray] = None

    def bind(self, covariate) -> 'Statistic':
        """Attach the fixed covariate vector Y"""
        if covariate is None:
            return self
        y = np.array(covariate, dtype=float)
        y.flags.writeable = False
        return replace(self, covariate=y)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.needs_covariate:
            if self.covariate is None:
                raise DomainError(f"statistic {self.name} needs a covariate vector y")
            if self.covariate.shape[0] != x.shape[0]:
                raise DimensionError(f"covariate has length {self.covariate.shape[0]}, data has {x.shape[0]}")
            value = self.fn(x, self.covariate)
        else:
            value = self.fn(x)
        value = float(value)
        if math.isnan(value):
            raise DegenerateStatisticError(f"statistic {self.name} returned NaN")
        return value

    def __repr__(self):
        return f"Statistic({self.name})"


class _SumFirstK:
    def __init__(self, k: int):
        self.k = k

    def __call__(self, x):
        if self.k > x.shape[0]:
            raise DimensionError(f"sum-first-k needs k <= n, got k={self.k}, n={x.shape[0]}")
        # correctly rounded, so the value does not depend on summation order
        return math.fsum(x[:self.k].tolist())


def sum_first_k(k: int) -> Statistic:
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    return Statistic(name=f"sum-first-k:{k}", fn=_SumFirstK(k))


def _abs_corr(x, y):
    # centering a constant vector can leave rounding residue, so test the raw range
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DegenerateStatisticError("abs-corr is undefined when x or y has zero variance")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateStatisticError("abs-corr is undefined when x or y has zero variance")
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    return min(abs(r), 1.0)


def abs_corr() -> Statistic:
    return Statistic(name='abs-corr', fn=_abs_corr, needs_covariate=True)


class _DiffMeans:
    def __init__(self, mask: np.ndarray):
        self.mask = mask

    def __call__(self, x):
        if x.shape[0] != self.mask.shape[0]:
            raise DimensionError(f"group mask has length {self.mask.shape[0]}, data has {x.shape[0]}")
        # shift-invariant; the shift makes constant data give exactly 0.0
        x = x - x[0]
        return float(x[self.mask].mean() - x[~self.mask].mean())


def diff_means(group_mask) -> Statistic:
    mask = np.asarray(group_mask, dtype=bool)
    if mask.ndim != 1:
        raise DimensionError("group mask must be a vector")
    if mask.all() or not mask.any():
        raise DomainError("group mask needs at least one true and one false entry")
    return Statistic(name='diff-means', fn=_DiffMeans(mask.copy()))


def parse_selector(selector: str, mask=None) -> Statistic:
    """
    CLI selectors: sum-first-k:K, abs-corr, diff-means[:maskfile].
    The mask for diff-means is loaded by the caller and passed in.
    """
    name, _, arg = selector.partition(':')
    name = name.strip().lower()
    if name == 'sum-first-k':
        try:
            return sum_first_k(int(arg))
        except ValueError:
            raise DomainError(f"sum-first-k needs an integer K, got {arg!r}")
    if name == 'abs-corr':
        return abs_corr()
    if name == 'diff-means':
        if mask is None:
            raise DomainError("diff-means needs a group mask (group column or mask file)")
        return diff_means(mask)
    raise DomainError(f"unknown statistic selector {selector!r}")
