"""Reward and value standardization.

Rewards use *dynamic* standardization: a Welford accumulator that is never
reset, so every reward is scaled against the full history seen so far.
Values use *block* standardization: each batch is scaled by its own
population mean/std, and those statistics travel with the batch so it can be
mapped back to its original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, as_finite_1d, check_finite_scalar

__all__ = [
    "SIGMA_FLOOR",
    "RunningStats",
    "BlockStats",
    "running_update",
    "running_update_many",
    "running_std",
    "dynamic_standardize",
    "block_stats",
    "block_standardize",
    "block_destandardize",
]

#: Denominator floor used whenever a standard deviation is zero or tiny.
SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class RunningStats:
    """Welford accumulator: count, running mean and summed squared deviation."""

    n: int = 0
    mean: float = 0.0
    agg: float = 0.0

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError(f"count must be non-negative, got {self.n}")
        if self.agg < 0:
            raise ValidationError(f"aggregated deviation must be non-negative, got {self.agg}")
        if self.n == 0 and (self.mean != 0.0 or self.agg != 0.0):
            raise ValidationError("an empty accumulator must have mean=0 and agg=0")

    @property
    def std(self) -> float:
        return running_std(self)


@dataclass(frozen=True)
class BlockStats:
    mu: float
    sigma: float
    count: int = 1

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be non-negative, got {self.sigma}")
        if self.count < 1:
            raise ValidationError(f"count must be positive, got {self.count}")

    @property
    def scale(self) -> float:
        """Divisor used in both directions: sigma, floored."""
        return max(self.sigma, SIGMA_FLOOR)


def _fold(stats: RunningStats, xs) -> RunningStats:
    n, mean, agg = stats.n, stats.mean, stats.agg
    for r in xs:
        n += 1
        diff = r - mean
        mean += diff / n
        # (r - M_{n-1}) * (r - M_n) is never negative, so agg stays >= 0
        agg += diff * (r - mean)
    return RunningStats(n, mean, agg)


def running_update(stats: RunningStats, r: float) -> RunningStats:
    return _fold(stats, (check_finite_scalar(r, "reward"),))


def running_update_many(stats: RunningStats, rewards) -> RunningStats:
    """Apply :func:`running_update` to each reward in arrival order."""
    return _fold(stats, as_finite_1d(rewards, "rewards", allow_empty=True).tolist())


def running_std(stats: RunningStats) -> float:
    """Population standard deviation ``sqrt(S_n / n)``."""
    if stats.n == 0:
        raise ValidationError("standard deviation of an empty accumulator is undefined")
    return math.sqrt(stats.agg / stats.n)


def dynamic_standardize(stats: RunningStats, rewards) -> tuple[RunningStats, np.ndarray]:
    """Fold ``rewards`` into ``stats`` in order, then standardize them.

    All rewards of the call are accumulated first; every element is then
    scaled with the post-update mean and std (floored at ``SIGMA_FLOOR``).
    Returns the new accumulator and the standardized rewards.
    """
    r = as_finite_1d(rewards, "rewards", allow_empty=True)
    stats = _fold(stats, r.tolist())
    if r.size == 0:
        return stats, r.copy()
    sigma = max(running_std(stats), SIGMA_FLOOR)
    return stats, (r - stats.mean) / sigma


def block_stats(values) -> BlockStats:
    v = as_finite_1d(values, "values")
    mu = float(np.mean(v))
    sigma = float(np.sqrt(np.mean((v - mu) ** 2)))
    return BlockStats(mu, sigma, v.size)


def block_standardize(values, stats: BlockStats) -> np.ndarray:
    v = as_finite_1d(values, "values", allow_empty=True)
    return (v - stats.mu) / stats.scale


def block_destandardize(z, stats: BlockStats) -> np.ndarray:
    """Map standardized values back with the same floored scale."""
    z = as_finite_1d(z, "z", allow_empty=True)
    return z * stats.scale + stats.mu
