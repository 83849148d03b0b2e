"""Batch GAE through the stack memory and a row of lookahead PEs.

Collection pushes one timestep (all trajectories) per cycle. The GAE phase
pops one timestep per initiation interval, feeds the whole row to a lockstep
PE array, and writes each result back on the second port in the last cycle
of its pass through the pipeline, ``F + L - 1`` cycles after the pop.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import ValidationError
from .gae import GaeParams, Trajectory, compute_advantages
from .hw import LookaheadPEArray, PipelineConfig
from .memory import (
    BramGeometry,
    ConflictReport,
    LayoutConfig,
    StackMemory,
    port_conflict_check,
)
from .quantization import (
    QuantScheme,
    dequantize_array,
    encode_rewards,
    encode_values,
    quantize_array,
)
from .standardization import SIGMA_FLOOR, BlockStats, RunningStats

__all__ = ["ResultCodec", "StackRun", "result_codecs", "run_stack_pipeline", "reference_results"]


@dataclass(frozen=True)
class ResultCodec:
    """Affine writeback quantizer: ``code = Q((x - center) / scale)``."""

    scheme: QuantScheme
    center: float
    scale: float

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return quantize_array(((x - self.center) / self.scale).ravel(), self.scheme).reshape(x.shape)

    def decode(self, codes) -> np.ndarray:
        c = np.asarray(codes)
        return (dequantize_array(c.ravel(), self.scheme) * self.scale + self.center).reshape(c.shape)

    @property
    def max_error(self) -> float:
        """Worst-case reconstruction error for inputs inside the codec range."""
        return self.scheme.step / 2 * self.scale


def result_codecs(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap: np.ndarray,
    params: GaeParams,
    bits: int,
    value_sigma: float,
) -> tuple[ResultCodec, ResultCodec]:
    """Advantage and RTG codecs sized from a bound on the inputs alone.

    ``|A_t| <= max|delta| * sum_{l<T} C**l`` holds for any trajectory, so a
    codec spanning that interval never saturates. Both codecs use the value
    block's sigma as their scale.
    """
    nxt = np.concatenate([values[:, 1:], bootstrap[:, None]], axis=1)
    delta = rewards + params.gamma * nxt - values
    T = rewards.shape[1]
    C = params.decay
    gain = float(T) if C == 1.0 else (1.0 - C**T) / (1.0 - C)
    bound = float(np.max(np.abs(delta))) * gain
    scale = max(value_sigma, SIGMA_FLOOR)
    pad = 1.0 + 1e-9
    adv = ResultCodec(QuantScheme(bits, max(bound, scale) / scale * pad), 0.0, scale)
    lo, hi = float(values.min()), float(values.max())
    half = (hi - lo) / 2 + bound
    rtg = ResultCodec(QuantScheme(bits, max(half, scale) / scale * pad), (hi + lo) / 2, scale)
    return adv, rtg


@dataclass
class StackRun:
    advantages: np.ndarray  # [num_traj, T], decoded from the banks
    rtgs: np.ndarray
    pe_rewards: np.ndarray  # reward/value streams as the PEs decoded them
    pe_values: np.ndarray
    bootstrap: np.ndarray
    memory: StackMemory
    collect_cycles: int
    gae_cycles: int
    conflicts: ConflictReport
    reward_stats: RunningStats
    value_stats: BlockStats | None
    codecs: tuple[ResultCodec, ResultCodec] | None

    @property
    def quantized(self) -> bool:
        return self.codecs is not None


def _slot_bits(bits: int) -> int:
    return 8 if bits <= 8 else 16


def run_stack_pipeline(
    trajectories: Sequence[Trajectory],
    params: GaeParams,
    cfg: PipelineConfig = PipelineConfig(),
    scheme: QuantScheme | None = QuantScheme(),
    reward_stats: RunningStats = RunningStats(),
    in_place: bool = True,
    geometry: BramGeometry = BramGeometry(),
) -> StackRun:
    """Process equal-length trajectories end to end.

    With a ``scheme`` the rewards are dynamically standardized and values
    block-standardized (one block for the whole batch) before quantizing,
    and results are re-quantized to the same width on writeback. With
    ``scheme=None`` the banks hold float64 and nothing is quantized.
    """
    if not trajectories:
        raise ValidationError("at least one trajectory is required")
    T = trajectories[0].length
    if any(tr.length != T for tr in trajectories):
        raise ValidationError("the stack layout needs equal-length trajectories")
    N = len(trajectories)
    rewards = np.stack([tr.rewards for tr in trajectories])
    values = np.stack([tr.values for tr in trajectories])
    bootstrap = np.array([tr.bootstrap_value for tr in trajectories])

    value_stats = None
    codecs = None
    if scheme is None:
        layout = LayoutConfig(N, T, 32, in_place=in_place)
        mem = StackMemory(layout, geometry, np.float64)
        r_bank, v_bank = rewards, values
        decode_r = decode_v = lambda row: row.astype(np.float64)
        pe_rewards, pe_values = rewards, values
    else:
        layout = LayoutConfig(N, T, _slot_bits(scheme.bits), in_place=in_place)
        mem = StackMemory(layout, geometry, np.uint16)
        # trajectory-major arrival order for the running reward statistics
        reward_stats, qr = encode_rewards(rewards.ravel(), reward_stats, scheme)
        qv = encode_values(values.ravel(), scheme)
        value_stats = qv.stats
        r_bank, v_bank = qr.codes.reshape(N, T), qv.codes.reshape(N, T)

        def decode_r(row):
            return dequantize_array(row, scheme)

        def decode_v(row):
            return dequantize_array(row, scheme) * value_stats.scale + value_stats.mu

        pe_rewards = decode_r(r_bank.ravel()).reshape(N, T)
        pe_values = decode_v(v_bank.ravel()).reshape(N, T)
        codecs = result_codecs(pe_rewards, pe_values, bootstrap, params, scheme.bits, value_stats.scale)

    for t in range(T):
        mem.push_timestep(t, r_bank[:, t], v_bank[:, t])
        mem.tick()
    collect_cycles = mem.clock

    pe = LookaheadPEArray(params, cfg, bootstrap)
    ii = cfg.initiation_interval
    pending: deque = deque()
    cycle = 0
    while mem.depth or pending:
        if pending and pending[0][0] == cycle:
            _, t, adv, rtg = pending.popleft()
            if codecs is not None:
                adv, rtg = codecs[0].encode(adv), codecs[1].encode(rtg)
            mem.write_results(t, adv, rtg)
        if mem.depth and cycle % ii == 0:
            t, rc, vc = mem.pop_timestep()
            adv, rtg, done = pe.issue(cycle, decode_r(rc), decode_v(vc))
            pending.append((done - 1, t, adv, rtg))
        mem.tick()
        cycle += 1

    adv_bank, rtg_bank = mem.advantage_bank.T, mem.rtg_bank.T
    if codecs is None:
        advantages, rtgs = adv_bank.astype(np.float64), rtg_bank.astype(np.float64)
    else:
        advantages, rtgs = codecs[0].decode(adv_bank), codecs[1].decode(rtg_bank)
    return StackRun(
        advantages=advantages,
        rtgs=rtgs,
        pe_rewards=pe_rewards,
        pe_values=pe_values,
        bootstrap=bootstrap,
        memory=mem,
        collect_cycles=collect_cycles,
        gae_cycles=cycle,
        conflicts=port_conflict_check(mem.trace, geometry),
        reward_stats=reward_stats,
        value_stats=value_stats,
        codecs=codecs,
    )


def reference_results(run: StackRun, params: GaeParams) -> tuple[np.ndarray, np.ndarray]:
    """Sequential GAE on exactly the streams the PEs consumed."""
    adv = np.empty_like(run.pe_rewards)
    rtg = np.empty_like(run.pe_rewards)
    for i in range(run.pe_rewards.shape[0]):
        res = compute_advantages(
            Trajectory(run.pe_rewards[i], run.pe_values[i], run.bootstrap[i]), params
        )
        adv[i], rtg[i] = res.advantages, res.rtgs
    return adv, rtg
