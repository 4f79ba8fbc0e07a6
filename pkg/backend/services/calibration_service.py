"""
Calibration Service - Monte Carlo Type-I error curves

Replicate r draws its null data and the method's internal randomness from
RngStream(seed, r), so a curve depends only on the seed and never on how the
replicates are split across worker processes.
"""
import os
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from services.errors import DomainError
from services.distribution_service import RngStream
from services.statistics_service import Statistic
from services.testing_engine import MethodSpec

logger = logging.getLogger(__name__)

CALIBRATION_WORKERS = int(os.getenv('CALIBRATION_WORKERS', 1))
CALIBRATION_CHUNK = int(os.getenv('CALIBRATION_CHUNK', 5000))

DEFAULT_ALPHAS = (Fraction(1, 20), Fraction(1, 10), Fraction(1, 3), Fraction(1, 2), Fraction(1))


def _gaussian(rng: RngStream, n: int, values) -> np.ndarray:
    return rng.normal(n)


def _uniform(rng: RngStream, n: int, values) -> np.ndarray:
    return rng.uniform(n)


def _laplace(rng: RngStream, n: int, values) -> np.ndarray:
    return rng.generator().laplace(size=n)


def _reassign(rng: RngStream, n: int, values) -> np.ndarray:
    """Uniform random assignment of a fixed multiset (the conditional null)"""
    return np.asarray(values, dtype=float)[rng.generator().permutation(n)]


# i.i.d.-coordinate null samplers; module-level so configs pickle into worker processes
DATA_SAMPLERS = {
    'gaussian': _gaussian,
    'uniform': _uniform,
    'laplace': _laplace,
    'values': _reassign,
}


def parse_alphas(text: str) -> Tuple[Fraction, ...]:
    """Comma-separated levels such as "0.05,1/3,1" as exact rationals in (0, 1]"""
    alphas = []
    for token in text.split(','):
        token = token.strip()
        if not token:
            continue
        try:
            alpha = Fraction(token)
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"cannot parse level {token!r}")
        if not 0 < alpha <= 1:
            raise DomainError(f"levels must lie in (0, 1], got {token}")
        alphas.append(alpha)
    if not alphas:
        raise DomainError("the level grid is empty")
    return tuple(sorted(set(alphas)))


@dataclass(frozen=True)
class CalibrationConfig:
    spec: MethodSpec
    stat: Statistic
    n: int
    sampler: str = 'gaussian'
    values: Optional[Tuple[float, ...]] = None
    alphas: Tuple[Fraction, ...] = DEFAULT_ALPHAS
    reps: int = 10_000

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError(f"reps must be at least 1, got {self.reps}")
        if self.sampler not in DATA_SAMPLERS:
            raise DomainError(f"unknown data sampler {self.sampler!r}; expected one of {', '.join(DATA_SAMPLERS)}")
        if self.sampler == 'values':
            if self.values is None or len(self.values) != self.n:
                raise DomainError(f"the values sampler needs exactly n={self.n} values")
        if not self.alphas:
            raise DomainError("the level grid is empty")
        object.__setattr__(self, 'alphas', tuple(sorted(Fraction(a) for a in self.alphas)))


@dataclass
class CalibrationCurve:
    method: str
    alphas: Tuple[Fraction, ...]
    rates: np.ndarray
    stderrs: np.ndarray
    reps: int
    factor: int = 1
    seed: Optional[int] = None
    flagged: List[Fraction] = field(default_factory=list)

    @property
    def bounds(self) -> np.ndarray:
        return np.minimum(1.0, self.factor * np.array([float(a) for a in self.alphas]))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.rates) >= 0))

    def matches_law(self, exact_cdf: Sequence[Fraction], sigmas: float = 4.0) -> bool:
        """Every rate within `sigmas` binomial standard errors of the exact P(P <= alpha)"""
        for rate, p in zip(self.rates, exact_cdf):
            p = float(p)
            sd = math.sqrt(p * (1 - p) / self.reps)
            if abs(rate - p) > sigmas * sd + 1e-12:
                return False
        return True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'alpha': [float(a) for a in self.alphas],
            'rate': self.rates,
            'stderr': self.stderrs,
            'bound': self.bounds,
            'factor': self.factor,
        })

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format='%.10g', lineterminator='\n')

    def to_dict(self) -> Dict:
        return {
            'method': self.method,
            'reps': self.reps,
            'seed': self.seed,
            'factor': self.factor,
            'monotone': self.monotone,
            'rows': [{'alpha': float(a), 'rate': float(r), 'stderr': float(s), 'bound': float(b), 'factor': self.factor}
                     for a, r, s, b in zip(self.alphas, self.rates, self.stderrs, self.bounds)],
            'flagged': [float(a) for a in self.flagged],
        }


def _replicate_value(config: CalibrationConfig, seed: int, r: int) -> float:
    rng = RngStream(seed, r)
    x = DATA_SAMPLERS[config.sampler](rng, config.n, config.values)
    report = config.spec.evaluate(x, config.stat, rng)
    # an e-value rejects at level alpha when 1/E <= alpha
    return report.reciprocal if report.is_evalue else report.value


def _run_chunk(config: CalibrationConfig, seed: int, start: int, stop: int) -> np.ndarray:
    return np.array([_replicate_value(config, seed, r) for r in range(start, stop)], dtype=float)


def simulate_pvalues(config: CalibrationConfig, seed: int, workers: Optional[int] = None,
                     chunk: Optional[int] = None) -> np.ndarray:
    """P-values of replicates 0..reps-1, in replicate order"""
    workers = CALIBRATION_WORKERS if workers is None else workers
    chunk = CALIBRATION_CHUNK if chunk is None else chunk
    if chunk < 1:
        raise DomainError(f"chunk size must be positive, got {chunk}")
    bounds = [(start, min(start + chunk, config.reps)) for start in range(0, config.reps, chunk)]

    if workers <= 1 or len(bounds) == 1:
        parts = [_run_chunk(config, seed, start, stop) for start, stop in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_run_chunk, [config] * len(bounds), [seed] * len(bounds),
                                      [b[0] for b in bounds], [b[1] for b in bounds]))
    return np.concatenate(parts)


def mc_calibrate(config: CalibrationConfig, rng: RngStream, workers: Optional[int] = None,
                 chunk: Optional[int] = None) -> CalibrationCurve:
    """Per-level rejection frequencies P(P <= alpha) with binomial standard errors"""
    logger.info(f"Calibrating {config.spec.method.value}: n={config.n}, reps={config.reps}, "
                f"sampler={config.sampler}, seed={rng.seed}")
    pvalues = simulate_pvalues(config, rng.seed, workers=workers, chunk=chunk)

    rates = np.array([float(np.mean(pvalues <= float(a))) for a in config.alphas])
    stderrs = np.sqrt(rates * (1.0 - rates) / config.reps)
    curve = CalibrationCurve(method=config.spec.method.value, alphas=config.alphas, rates=rates,
                             stderrs=stderrs, reps=config.reps, factor=config.spec.factor, seed=rng.seed)

    for alpha, rate, se, bound in zip(curve.alphas, curve.rates, curve.stderrs, curve.bounds):
        if rate > bound + 4 * se:
            curve.flagged.append(alpha)
    if curve.flagged:
        logger.warning(f"{curve.method}: rejection rate above the level line at alpha="
                       f"{', '.join(str(a) for a in curve.flagged)}")
    return curve
