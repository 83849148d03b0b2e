"""Cycle-level model of the pipelined GAE processing element and PE array.

Timing model
------------
A PE issues one element every ``II`` cycles, walking each trajectory from the
last timestep to the first. An element spends ``F`` cycles in the front end
(fetch, dequantize, TD residual, lookahead partial sum) and ``L`` cycles in
the registered multiply-accumulate feedback loop. With k-step lookahead the
loop input for element ``j`` is the result of element ``j - k``, so the
schedule is legal iff ``k * II >= L``; the smallest such interval is
``ceil(L / k)``.

Numerics are float64 regardless of timing: the configuration moves cycles,
never results.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, as_finite_1d, check_positive_int
from .gae import AdvantageResult, GaeParams
from .quantization import (
    QuantizedRewards,
    QuantizedValueBlock,
    decode_rewards,
    decode_values,
)

__all__ = [
    "BASELINE_ELEMENTS_PER_SECOND",
    "PipelineConfig",
    "CycleReport",
    "SystolicConfig",
    "DispatchEntry",
    "DispatchTrace",
    "PipelineHazard",
    "LookaheadPEArray",
    "initiation_interval",
    "simulate_pe",
    "simulate_systolic",
    "aggregate_throughput",
    "speedup_vs_baseline",
]

#: Measured software GAE rate on the CPU-GPU reference system.
BASELINE_ELEMENTS_PER_SECOND = 9000.0


class PipelineHazard(RuntimeError):
    """An element needed a feedback result that was still in flight."""


def initiation_interval(k: int, feedback_latency: int) -> int:
    k = check_positive_int(k, "k")
    L = check_positive_int(feedback_latency, "feedback_latency")
    return max(1, -(-L // k))


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 2
    feedback_latency: int = 2
    frontend_latency: int = 4
    clock_hz: float = 3.0e8

    def __post_init__(self):
        check_positive_int(self.k, "k")
        check_positive_int(self.feedback_latency, "feedback_latency")
        check_positive_int(self.frontend_latency, "frontend_latency", minimum=0)
        if not self.clock_hz > 0:
            raise ValidationError(f"clock_hz must be positive, got {self.clock_hz}")

    @property
    def initiation_interval(self) -> int:
        return initiation_interval(self.k, self.feedback_latency)

    @property
    def fill_cycles(self) -> int:
        return self.frontend_latency + self.feedback_latency

    def total_cycles(self, length: int) -> int:
        return self.fill_cycles + (length - 1) * self.initiation_interval


@dataclass(frozen=True)
class CycleReport:
    initiation_interval: int
    fill_cycles: int
    total_cycles: int
    elements_per_second: float


@dataclass(frozen=True)
class SystolicConfig:
    rows: int = 64
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        check_positive_int(self.rows, "rows")


class LookaheadPEArray:
    """``lanes`` identical k-step lookahead PEs driven in lockstep.

    Each call to :meth:`issue` feeds one timestep (one reward and one value
    per lane, in reverse time order) and returns that timestep's advantages
    and rewards-to-go together with the cycle at which they leave the
    feedback loop. A single PE is simply ``lanes=1``.
    """

    def __init__(self, params: GaeParams, cfg: PipelineConfig, bootstrap_values):
        self.params = params
        self.cfg = cfg
        self._C = params.decay
        self._pole = self._C**cfg.k
        # V(s_{t+1}) register, seeded with the bootstrap value
        self._next_value = np.array(bootstrap_values, dtype=np.float64, ndmin=1)
        self._deltas = deque(maxlen=cfg.k - 1) if cfg.k > 1 else deque(maxlen=0)
        self._inflight = deque(maxlen=cfg.k)  # (ready_cycle, advantages)
        self.issued = 0
        self.last_issue_cycle = None

    @property
    def lanes(self) -> int:
        return self._next_value.size

    def issue(self, cycle: int, rewards, values):
        cfg = self.cfg
        if self.last_issue_cycle is not None and cycle <= self.last_issue_cycle:
            raise PipelineHazard(f"two issues at or before cycle {cycle}")
        loop_entry = cycle + cfg.frontend_latency
        if len(self._inflight) == cfg.k:
            ready, fed_back = self._inflight[0]
            if ready > loop_entry:
                raise PipelineHazard(
                    f"element {self.issued} enters the feedback loop at cycle "
                    f"{loop_entry} but its operand is ready only at {ready}"
                )
        else:
            fed_back = 0.0
        r = np.asarray(rewards, dtype=np.float64)
        v = np.asarray(values, dtype=np.float64)
        delta = r + self.params.gamma * self._next_value - v
        fir = 1.0 * delta
        w = self._C
        for d in self._deltas:  # most recent (t+1) first
            fir = fir + w * d
            w *= self._C
        adv = fir + self._pole * fed_back
        done = loop_entry + cfg.feedback_latency
        self._inflight.append((done, adv))
        if self._deltas.maxlen:
            self._deltas.appendleft(delta)
        self._next_value = v
        self.issued += 1
        self.last_issue_cycle = cycle
        return adv, v + adv, done


def _decode(stream, name):
    if isinstance(stream, QuantizedRewards):
        return decode_rewards(stream)
    if isinstance(stream, QuantizedValueBlock):
        return decode_values(stream)
    return as_finite_1d(stream, name)


def simulate_pe(
    rewards,
    values,
    params: GaeParams,
    cfg: PipelineConfig = PipelineConfig(),
    bootstrap_value: float = 0.0,
    *,
    issue_interval: int | None = None,
) -> tuple[AdvantageResult, CycleReport]:
    """Run one trajectory through a single PE, cycle by cycle.

    ``rewards`` may be a :class:`QuantizedRewards` (decoded in standardized
    units), a :class:`QuantizedValueBlock` (decoded and de-standardized) or a
    plain float sequence; ``values`` likewise. ``issue_interval`` overrides
    the derived initiation interval and exists to demonstrate that anything
    shorter raises :class:`PipelineHazard`.
    """
    r = _decode(rewards, "rewards")
    v = _decode(values, "values")
    if r.size != v.size:
        raise ValidationError(f"reward and value streams differ in length ({r.size} != {v.size})")
    if not 1 <= cfg.k <= 8:
        raise ValidationError(f"lookahead depth must lie in [1, 8], got {cfg.k}")
    ii = cfg.initiation_interval if issue_interval is None else check_positive_int(
        issue_interval, "issue_interval"
    )
    T = r.size
    pe = LookaheadPEArray(params, cfg, [bootstrap_value])
    adv = np.empty(T)
    rtg = np.empty(T)
    last_done = 0
    cycle = 0
    j = 0
    while j < T:
        if cycle % ii == 0:
            t = T - 1 - j
            a, g, done = pe.issue(cycle, r[t : t + 1], v[t : t + 1])
            adv[t], rtg[t] = a[0], g[0]
            last_done = done
            j += 1
        cycle += 1
    report = CycleReport(
        initiation_interval=ii,
        fill_cycles=cfg.fill_cycles,
        total_cycles=last_done,
        elements_per_second=cfg.clock_hz / ii,
    )
    return AdvantageResult(adv, rtg), report


@dataclass(frozen=True)
class DispatchEntry:
    trajectory: int
    row: int
    start: int
    end: int


@dataclass(frozen=True)
class DispatchTrace:
    entries: tuple
    makespan: int

    def violations(self) -> list[str]:
        """Overlapping work on a row, or trajectories missing or repeated."""
        problems = []
        seen = sorted(e.trajectory for e in self.entries)
        if seen != list(range(len(self.entries))):
            problems.append("trajectories not scheduled exactly once")
        by_row: dict[int, list[DispatchEntry]] = {}
        for e in self.entries:
            by_row.setdefault(e.row, []).append(e)
        for row, items in by_row.items():
            items.sort(key=lambda e: e.start)
            for a, b in zip(items, items[1:]):
                if b.start < a.end:
                    problems.append(f"row {row}: trajectories {a.trajectory} and {b.trajectory} overlap")
        return problems


def simulate_systolic(traj_lengths, cfg: SystolicConfig = SystolicConfig()) -> DispatchTrace:
    """Greedy dispatch from one queue: the earliest-free row takes the next trajectory.

    Ties go to the lowest row index. For equal lengths this is plain
    round-robin.
    """
    lengths = [check_positive_int(n, "trajectory length") for n in traj_lengths]
    if not lengths:
        raise ValidationError("at least one trajectory is required")
    free = [(0, row) for row in range(cfg.rows)]
    heapq.heapify(free)
    entries = []
    for i, n in enumerate(lengths):
        start, row = heapq.heappop(free)
        end = start + cfg.pipeline.total_cycles(n)
        entries.append(DispatchEntry(i, row, start, end))
        heapq.heappush(free, (end, row))
    return DispatchTrace(tuple(entries), max(e.end for e in entries))


def aggregate_throughput(cfg: SystolicConfig = SystolicConfig()) -> float:
    """Steady-state elements per second across all rows."""
    return cfg.rows * cfg.pipeline.clock_hz / cfg.pipeline.initiation_interval


def speedup_vs_baseline(aggregate: float, baseline: float = BASELINE_ELEMENTS_PER_SECOND) -> float:
    if not baseline > 0:
        raise ValidationError(f"baseline must be positive, got {baseline}")
    return aggregate / baseline


def lower_bound_makespan(traj_lengths, cfg: SystolicConfig) -> int:
    total = sum(cfg.pipeline.total_cycles(n) for n in traj_lengths)
    return math.ceil(total / cfg.rows)
