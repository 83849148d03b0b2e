"""Uniform n-bit quantization and the reward/value codecs built on it.

Codes index ``2**bits`` equal bins covering ``[-R, R)`` in standardized
units; values outside that interval saturate to the first or last bin and
reconstruction returns the bin center.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, as_finite_1d, check_finite_scalar
from .gae import Trajectory
from .standardization import (
    BlockStats,
    RunningStats,
    block_destandardize,
    block_standardize,
    block_stats,
    dynamic_standardize,
)

__all__ = [
    "QuantScheme",
    "QuantizedRewards",
    "QuantizedValueBlock",
    "DatapathVariant",
    "quantize",
    "dequantize",
    "quantize_array",
    "dequantize_array",
    "encode_rewards",
    "decode_rewards",
    "encode_values",
    "decode_values",
    "process_trajectory",
]

CODE_DTYPE = np.uint16


@dataclass(frozen=True)
class QuantScheme:
    """``bits``-wide uniform quantizer over ``[-range_, range_)``."""

    bits: int = 8
    range_: float = 4.0

    def __post_init__(self):
        if isinstance(self.bits, bool) or int(self.bits) != self.bits or not 2 <= self.bits <= 16:
            raise ValidationError(f"bits must be an integer in [2, 16], got {self.bits!r}")
        r = check_finite_scalar(self.range_, "range")
        if r <= 0:
            raise ValidationError(f"range must be positive, got {r}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "range_", r)

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return 2.0 * self.range_ / self.levels

    @property
    def zero_code(self) -> int:
        """Code of the bin whose lower edge is 0."""
        return self.levels // 2


def quantize_array(x, scheme: QuantScheme) -> np.ndarray:
    x = as_finite_1d(x, "x", allow_empty=True)
    # pre-clip so (x + R) cannot overflow for magnitudes near 1e308
    x = np.clip(x, -2.0 * scheme.range_, 2.0 * scheme.range_)
    # floor(x / step) + L/2 equals floor((x + R) / step) without rounding x + R
    bins = np.floor(x / scheme.step) + scheme.levels // 2
    return np.clip(bins, 0, scheme.levels - 1).astype(CODE_DTYPE)


def dequantize_array(codes, scheme: QuantScheme) -> np.ndarray:
    c = np.asarray(codes)
    if c.ndim != 1:
        c = c.reshape(-1)
    if c.size and (c.dtype.kind not in "ui" or c.min() < 0 or c.max() >= scheme.levels):
        raise ValidationError(f"codes must be integers in [0, {scheme.levels})")
    # the offset is an exact half-integer, so only the product rounds
    return (c.astype(np.float64) - (scheme.levels // 2) + 0.5) * scheme.step


def quantize(x: float, scheme: QuantScheme) -> int:
    return int(quantize_array([check_finite_scalar(x, "x")], scheme)[0])


def dequantize(code: int, scheme: QuantScheme) -> float:
    if isinstance(code, bool) or int(code) != code or not 0 <= code < scheme.levels:
        raise ValidationError(f"code must be an integer in [0, {scheme.levels}), got {code!r}")
    return float(dequantize_array(np.array([int(code)]), scheme)[0])


@dataclass(frozen=True)
class QuantizedRewards:
    codes: np.ndarray
    scheme: QuantScheme

    def __post_init__(self):
        _check_codes(self.codes, self.scheme)


@dataclass(frozen=True)
class QuantizedValueBlock:
    codes: np.ndarray
    scheme: QuantScheme
    stats: BlockStats

    def __post_init__(self):
        _check_codes(self.codes, self.scheme)


def _check_codes(codes, scheme):
    c = np.asarray(codes)
    if c.size and (c.min() < 0 or c.max() >= scheme.levels):
        raise ValidationError(f"codes must lie in [0, {scheme.levels})")


def encode_rewards(
    rewards, stats: RunningStats, scheme: QuantScheme
) -> tuple[RunningStats, QuantizedRewards]:
    stats, z = dynamic_standardize(stats, rewards)
    return stats, QuantizedRewards(quantize_array(z, scheme), scheme)


def decode_rewards(q: QuantizedRewards) -> np.ndarray:
    """Dequantize only; the result stays in standardized units."""
    return dequantize_array(q.codes, q.scheme)


def encode_values(values, scheme: QuantScheme) -> QuantizedValueBlock:
    stats = block_stats(values)
    z = block_standardize(values, stats)
    return QuantizedValueBlock(quantize_array(z, scheme), scheme, stats)


def decode_values(q: QuantizedValueBlock) -> np.ndarray:
    return block_destandardize(dequantize_array(q.codes, q.scheme), q.stats)


class DatapathVariant(enum.IntEnum):
    """The five reward/value datapaths compared against full precision."""

    BASELINE = 1
    DYN_STD_REWARDS = 2
    BLOCK_BOTH_DESTD = 3
    BLOCK_BOTH_NO_DESTD_REWARDS = 4
    DYN_REWARDS_BLOCK_VALUES = 5


def process_trajectory(
    traj: Trajectory,
    variant: DatapathVariant,
    scheme: QuantScheme,
    stats: RunningStats,
) -> tuple[RunningStats, np.ndarray, np.ndarray]:
    """Run one trajectory through ``variant``'s encode/decode path.

    Returns the (possibly updated) reward accumulator and the reward and
    value streams that GAE would see after fetching from memory. Only the
    dynamic-standardization variants touch ``stats``.
    """
    variant = DatapathVariant(variant)
    rewards, values = traj.rewards, traj.values
    if variant is DatapathVariant.BASELINE:
        return stats, rewards.copy(), values.copy()
    if variant is DatapathVariant.DYN_STD_REWARDS:
        stats, z = dynamic_standardize(stats, rewards)
        return stats, z, values.copy()
    if variant is DatapathVariant.DYN_REWARDS_BLOCK_VALUES:
        stats, qr = encode_rewards(rewards, stats, scheme)
        return stats, decode_rewards(qr), decode_values(encode_values(values, scheme))
    # variants 3 and 4 block-code the rewards exactly like the values
    qr = encode_values(rewards, scheme)
    if variant is DatapathVariant.BLOCK_BOTH_DESTD:
        r_out = decode_values(qr)
    else:
        r_out = dequantize_array(qr.codes, scheme)
    return stats, r_out, decode_values(encode_values(values, scheme))
