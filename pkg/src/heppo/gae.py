"""Generalized advantage estimation: reference and hardware-form arithmetic.

Three independent routes to the same advantages are provided:

* :func:`gae_sequential` walks the trajectory backwards with the one-step
  recurrence ``A_t = delta_t + C * A_{t+1}``.
* :func:`gae_truncated_sum` evaluates the finite exponential sum directly in
  O(T^2).  It is the oracle and is never used on the hot path.
* :func:`gae_lookahead` re-associates the recurrence so each output depends on
  the output ``k`` steps later, which is the form a pipelined PE evaluates.

Indices are 0-based throughout; the value after the last step is supplied
explicitly as ``bootstrap_value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ._validation import (
    ValidationError,
    as_finite_1d,
    check_decay,
    check_finite_scalar,
    check_positive_int,
)

__all__ = [
    "Trajectory",
    "GaeParams",
    "AdvantageResult",
    "td_residuals",
    "gae_sequential",
    "gae_truncated_sum",
    "gae_lookahead",
    "rewards_to_go",
    "compute_advantages",
]


@dataclass(frozen=True)
class Trajectory:
    """Rewards and critic values of one agent, plus V(s_{T+1}).

    ``bootstrap_value`` is 0 for a terminal trajectory.
    """

    rewards: np.ndarray
    values: np.ndarray
    bootstrap_value: float = 0.0

    def __post_init__(self):
        r = as_finite_1d(self.rewards, "rewards")
        v = as_finite_1d(self.values, "values")
        if r.shape != v.shape:
            raise ValidationError(
                f"rewards and values differ in length ({r.size} != {v.size})"
            )
        r.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "values", v)
        object.__setattr__(
            self, "bootstrap_value", check_finite_scalar(self.bootstrap_value, "bootstrap_value")
        )

    def __len__(self) -> int:
        return self.rewards.size

    @property
    def length(self) -> int:
        return self.rewards.size


@dataclass(frozen=True)
class GaeParams:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        g = check_finite_scalar(self.gamma, "gamma")
        lam = check_finite_scalar(self.lam, "lambda")
        if not 0.0 < g <= 1.0:
            raise ValidationError(f"gamma must lie in (0, 1], got {g}")
        if not 0.0 <= lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "lam", lam)

    @property
    def decay(self) -> float:
        """The combined decay ``gamma * lambda``; derived, never stored."""
        return self.gamma * self.lam


@dataclass(frozen=True)
class AdvantageResult:
    advantages: np.ndarray
    rtgs: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.advantages.size


def td_residuals(traj: Trajectory, params: GaeParams) -> np.ndarray:
    """One-step TD errors ``r_t + gamma * V_{t+1} - V_t``."""
    next_values = np.empty_like(traj.values)
    next_values[:-1] = traj.values[1:]
    next_values[-1] = traj.bootstrap_value
    return traj.rewards + params.gamma * next_values - traj.values


def gae_sequential(deltas, C: float, trace: list | None = None) -> np.ndarray:
    """Backward recurrence ``A_t = delta_t + C * A_{t+1}`` with ``A_{T-1} = delta_{T-1}``.

    If ``trace`` is a list, the index of every consumed residual is appended
    to it in processing order (always ``T-1`` down to ``0``).
    """
    d = as_finite_1d(deltas, "deltas")
    C = check_decay(C)
    out = np.empty_like(d)
    acc = 0.0
    for t in range(d.size - 1, -1, -1):
        if trace is not None:
            trace.append(t)
        acc = d[t] + C * acc
        out[t] = acc
    return out


def gae_truncated_sum(deltas, C: float) -> np.ndarray:
    """Direct finite sum ``A_t = sum_{l=0}^{T-1-t} C**l * delta_{t+l}`` (O(T^2) oracle)."""
    d = as_finite_1d(deltas, "deltas")
    C = check_decay(C)
    T = d.size
    out = np.zeros(T)
    weight = 1.0
    for lag in range(T):
        if weight == 0.0:
            break
        out[: T - lag] += weight * d[lag:]
        weight *= C
    return out


def _lookahead_fir(d: np.ndarray, C: float, k: int) -> np.ndarray:
    # sum_{i<k} C**i * delta_{t+i}, deltas beyond the end read as 0
    T = d.size
    fir = np.zeros(T)
    weight = 1.0
    for i in range(min(k, T)):
        fir[: T - i] += weight * d[i:]
        weight *= C
    return fir


def gae_lookahead(deltas, C: float, k: int) -> np.ndarray:
    """k-step lookahead form ``A_t = C**k * A_{t+k} + sum_{i<k} C**i * delta_{t+i}``.

    Advantages and residuals past the end of the trajectory are taken as
    zero, so the first ``k`` outputs use the same formula as the rest. The
    recurrence splits into ``k`` independent interleaved chains (one per
    residue of ``t mod k``), each a first-order filter with pole ``C**k``.
    That independence is what lets a PE keep ``k`` results in flight.
    """
    d = as_finite_1d(deltas, "deltas")
    C = check_decay(C)
    k = check_positive_int(k, "k")
    fir = _lookahead_fir(d, C, k)
    pole = C**k
    out = np.empty_like(d)
    T = d.size
    for r in range(min(k, T)):
        # chain r holds t = T-1-r, T-1-r-k, ... in processing order
        idx = np.arange(T - 1 - r, -1, -k)
        out[idx] = lfilter([1.0], [1.0, -pole], fir[idx])
    return out


def rewards_to_go(values, advantages) -> np.ndarray:
    v = as_finite_1d(values, "values")
    a = as_finite_1d(advantages, "advantages")
    if v.shape != a.shape:
        raise ValidationError(f"values and advantages differ in length ({v.size} != {a.size})")
    return v + a


def compute_advantages(
    traj: Trajectory, params: GaeParams, k: int | None = None
) -> AdvantageResult:
    """Advantages and rewards-to-go for one trajectory.

    ``k=None`` uses the sequential recurrence; an integer selects the
    lookahead form.
    """
    deltas = td_residuals(traj, params)
    if k is None:
        adv = gae_sequential(deltas, params.decay)
    else:
        adv = gae_lookahead(deltas, params.decay, k)
    return AdvantageResult(adv, rewards_to_go(traj.values, adv))
