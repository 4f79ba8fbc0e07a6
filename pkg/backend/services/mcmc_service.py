"""
MCMC Service - exchangeable draws from a Markov kernel by the parallel
(hub-and-spoke) construction: run s backward steps from the observed state to a
hidden state, then M independent s-step forward runs from the hidden state.

If the observed state is marginally stationary, the observed state and the M
siblings are exchangeable. For kernels supplied by callers, stationarity of the
null law is the caller's obligation; it cannot be checked here.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, List, NamedTuple, Optional

import numpy as np

from services.errors import DomainError
from services.permutation_service import Perm, apply, compose, inverse
from services.distribution_service import PermDistribution, RngStream, sample_iid
from services.testing_engine import Method, TestReport

logger = logging.getLogger(__name__)


class Step(NamedTuple):
    state: Any
    label: Optional[Perm] = None


class BCDraws(NamedTuple):
    hidden: Any
    siblings: List[Any]
    hidden_label: Optional[Perm] = None
    sibling_labels: Optional[List[Perm]] = None


class MarkovKernel(ABC):
    """Forward and backward transitions of a chain; both draw from an RngStream"""
    name = 'kernel'
    support_size: Optional[int] = None

    @abstractmethod
    def forward(self, state, rng: RngStream) -> Step:
        ...

    @abstractmethod
    def backward(self, state, rng: RngStream) -> Step:
        ...

    def forward_steps(self, state, steps: int, rng: RngStream) -> Step:
        for _ in range(steps):
            state = self.forward(state, rng).state
        return Step(state)

    def backward_steps(self, state, steps: int, rng: RngStream) -> Step:
        for _ in range(steps):
            state = self.backward(state, rng).state
        return Step(state)


class IdentityKernel(MarkovKernel):
    """Every step stays put"""
    name = 'identity'
    support_size = 1

    def forward(self, state, rng):
        return Step(state)

    def backward(self, state, rng):
        return Step(state)


class PermutationKernel(MarkovKernel):
    """
    Forward: x -> x_sigma with sigma ~ q. Backward: x -> x_{sigma^-1} with sigma ~ q.
    Any exchangeable law on data vectors is stationary for this chain.

    Multi-step moves draw the s permutations up front and apply their composition
    once; labels are the composed permutations.
    """
    name = 'permutation'

    def __init__(self, q: PermDistribution):
        self.q = q
        self.support_size = q.size

    def forward(self, state, rng):
        sigma = sample_iid(self.q, 1, rng)[0]
        return Step(apply(state, sigma), sigma)

    def backward(self, state, rng):
        sigma = sample_iid(self.q, 1, rng)[0]
        return Step(apply(state, inverse(sigma)), sigma)

    def forward_steps(self, state, steps, rng):
        # x -> x_{s1} -> (x_{s1})_{s2} = x_{compose(s2, s1)} -> ...
        sigmas = sample_iid(self.q, steps, rng)
        moved = sigmas[0]
        for sigma in sigmas[1:]:
            moved = compose(sigma, moved)
        return Step(apply(state, moved), moved)

    def backward_steps(self, state, steps, rng):
        # hidden = x_{h^-1}; the label is h, which is sigma_0 when steps == 1
        taus = sample_iid(self.q, steps, rng)
        back = inverse(taus[0])
        for tau in taus[1:]:
            back = compose(inverse(tau), back)
        return Step(apply(state, back), inverse(back))


def bc_draws(z, M: int, steps: int, kernel: MarkovKernel, rng: RngStream) -> BCDraws:
    """Hidden state by `steps` backward moves, then M independent `steps`-step forward runs"""
    if M < 1:
        raise DomainError(f"M must be at least 1, got {M}")
    if steps < 1:
        raise DomainError(f"steps must be at least 1, got {steps}")

    hidden = kernel.backward_steps(z, steps, rng)
    siblings = [kernel.forward_steps(hidden.state, steps, rng) for _ in range(M)]

    sibling_labels = [s.label for s in siblings]
    if any(label is None for label in sibling_labels):
        sibling_labels = None
    logger.debug(f"BC draws: kernel={kernel.name}, M={M}, steps={steps}")
    return BCDraws(hidden.state, [s.state for s in siblings], hidden.label, sibling_labels)


def bc_pvalue(z, M: int, steps: int, kernel: MarkovKernel, scorer: Callable, rng: RngStream) -> TestReport:
    """P = (1 + sum_m 1{T(Z_m) >= T(Z)}) / (1 + M) over the exchangeable siblings"""
    draws = bc_draws(z, M, steps, kernel, rng)
    observed = float(scorer(z))
    exceed = sum(float(scorer(sibling)) >= observed for sibling in draws.siblings)
    value = (1 + exceed) / (1 + M)

    labels = None
    if draws.hidden_label is not None and draws.sibling_labels is not None:
        labels = [draws.hidden_label] + draws.sibling_labels
    q = getattr(kernel, 'q', None)
    return TestReport(
        method=Method.BESAG_CLIFFORD.value,
        value=value,
        statistic=getattr(scorer, 'name', 'custom'),
        statistic_value=observed,
        n=int(np.shape(z)[0]) if np.ndim(z) >= 1 else 0,
        M=M,
        seed=rng.seed,
        anchor=draws.hidden_label,
        support_size=kernel.support_size,
        draws=labels,
        weight_total=q.raw_total if q is not None else None,
    )
