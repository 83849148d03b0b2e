"""Experiment runner: synthetic streams, datapath fidelity, sweeps, reports.

Random streams come from NumPy's ``Generator(PCG64(seed))``. Changing the
generator or the order of draws changes every golden report.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from ._validation import ValidationError, check_positive_int
from .gae import GaeParams, Trajectory, compute_advantages
from .hw import (
    BASELINE_ELEMENTS_PER_SECOND,
    SystolicConfig,
    aggregate_throughput,
    speedup_vs_baseline,
)
from .memory import (
    BramGeometry,
    LayoutConfig,
    bandwidth_requirement,
    bram_blocks_for_bandwidth,
    bram_blocks_for_storage,
    dram_bytes_per_cycle,
)
from .quantization import DatapathVariant, QuantScheme, process_trajectory
from .standardization import RunningStats

__all__ = [
    "STREAM_KINDS",
    "StreamSpec",
    "generate_streams",
    "FidelityReport",
    "run_variant",
    "quant_sweep",
    "PhaseProfile",
    "CPU_GPU_PROFILE",
    "CPU_ONLY_PROFILE",
    "PROFILES",
    "GAE_SUBPHASES",
    "MEMORY_SUBPHASES",
    "phase_share",
    "profile_speedup",
    "report_hw",
]

STREAM_KINDS = ("stationary-normal", "drifting-mean", "drifting-scale", "heavy-tail")

DDR4_BYTES_PER_SEC = 25e9
DEVICE_BRAM_BLOCKS = 312  # ZCU106 (XCZU7EV)


@dataclass(frozen=True)
class StreamSpec:
    """Synthetic reward/value streams, ``epochs`` batches of ``num_traj`` trajectories.

    Drifting kinds move the mean by ``mean_drift`` (or multiply the scale by
    ``1 + scale_drift``) once per epoch, for rewards and values alike.
    """

    kind: str = "stationary-normal"
    num_traj: int = 64
    timesteps: int = 1024
    seed: int = 0
    epochs: int = 1
    reward_mean: float = 0.0
    reward_scale: float = 1.0
    value_mean: float = 0.0
    value_scale: float = 1.0
    mean_drift: float = 0.5
    scale_drift: float = 0.5
    tail_df: float = 3.0

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValidationError(f"unknown stream kind {self.kind!r}; expected one of {STREAM_KINDS}")
        check_positive_int(self.num_traj, "num_traj")
        check_positive_int(self.timesteps, "timesteps")
        check_positive_int(self.epochs, "epochs")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.reward_scale <= 0 or self.value_scale <= 0:
            raise ValidationError("scales must be positive")
        if self.kind == "heavy-tail" and self.tail_df <= 0:
            raise ValidationError("tail_df must be positive")


def generate_streams(spec: StreamSpec) -> list[Trajectory]:
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    shape = (spec.num_traj, spec.timesteps)
    out = []
    for epoch in range(spec.epochs):
        r_mu, r_sd = spec.reward_mean, spec.reward_scale
        v_mu, v_sd = spec.value_mean, spec.value_scale
        if spec.kind == "drifting-mean":
            r_mu += epoch * spec.mean_drift
            v_mu += epoch * spec.mean_drift
        elif spec.kind == "drifting-scale":
            growth = (1.0 + spec.scale_drift) ** epoch
            r_sd *= growth
            v_sd *= growth
        if spec.kind == "heavy-tail":
            rewards = r_mu + r_sd * rng.standard_t(spec.tail_df, size=shape)
            values = v_mu + v_sd * rng.standard_t(spec.tail_df, size=shape)
        else:
            rewards = rng.normal(r_mu, r_sd, size=shape)
            values = rng.normal(v_mu, v_sd, size=shape)
        out.extend(Trajectory(rewards[i], values[i], 0.0) for i in range(spec.num_traj))
    return out


@dataclass(frozen=True)
class FidelityReport:
    """Mean squared deviation of one datapath from the full-precision baseline."""

    variant: int
    bits: int
    range_: float
    elements: int
    reward_mse: float
    value_mse: float
    advantage_mse: float
    rtg_mse: float

    def as_row(self) -> dict:
        return asdict(self)


FIDELITY_COLUMNS = tuple(FidelityReport.__dataclass_fields__)


def run_variant(
    streams: Sequence[Trajectory],
    variant: DatapathVariant,
    scheme: QuantScheme = QuantScheme(),
    params: GaeParams = GaeParams(),
    k: int | None = None,
) -> FidelityReport:
    """Push every trajectory through ``variant`` and compare with the baseline.

    One reward accumulator is threaded through ``streams`` in order, so
    dynamic standardization sees the whole history.
    """
    variant = DatapathVariant(variant)
    stats = RunningStats()
    sq = np.zeros(4)
    n = 0
    for traj in streams:
        stats, r, v = process_trajectory(traj, variant, scheme, stats)
        base = compute_advantages(traj, params, k)
        got = compute_advantages(Trajectory(r, v, traj.bootstrap_value), params, k)
        sq += [
            np.sum((r - traj.rewards) ** 2),
            np.sum((v - traj.values) ** 2),
            np.sum((got.advantages - base.advantages) ** 2),
            np.sum((got.rtgs - base.rtgs) ** 2),
        ]
        n += traj.length
    mse = sq / n if n else sq
    return FidelityReport(int(variant), scheme.bits, scheme.range_, n, *map(float, mse))


def quant_sweep(
    streams: Sequence[Trajectory],
    bits_range,
    range_: float = 4.0,
    params: GaeParams = GaeParams(),
    variant: DatapathVariant = DatapathVariant.DYN_REWARDS_BLOCK_VALUES,
) -> list[FidelityReport]:
    """One :func:`run_variant` per bit width, reported in ``bits_range`` order."""
    bits = list(bits_range)
    for b in bits:
        if not 2 <= b <= 16:
            raise ValidationError(f"bit widths must lie in [2, 16], got {b}")
    return [run_variant(streams, variant, QuantScheme(b, range_), params) for b in bits]


@dataclass(frozen=True)
class PhaseProfile:
    """Share of one PPO iteration spent in each (phase, sub-phase), in percent."""

    system: str
    phases: tuple  # ((phase, subphase, percent), ...)

    def __post_init__(self):
        if any(p <= 0 for _, _, p in self.phases):
            raise ValidationError("phase percentages must be positive")
        total = self.total
        if not 99.0 <= total <= 101.0:
            raise ValidationError(f"phase percentages sum to {total}, outside [99, 101]")

    @property
    def total(self) -> float:
        return math.fsum(p for _, _, p in self.phases)

    def names(self) -> set[str]:
        return {ph for ph, _, _ in self.phases} | {sub for _, sub, _ in self.phases}


CPU_GPU_PROFILE = PhaseProfile(
    "CPU-GPU",
    (
        ("Trajectory Collection", "DNN Inference", 9.92),
        ("Trajectory Collection", "Environment Run", 46.58),
        ("Trajectory Collection", "CPU-GPU Communication", 0.85),
        ("Trajectory Collection", "Storing Trajectories", 5.73),
        ("GAE", "GAE Memory Fetch", 5.00),
        ("GAE", "GAE Computation", 24.79),
        ("GAE", "GAE Memory Write", 0.17),
        ("Network Update", "Loss Calculation", 5.21),
        ("Network Update", "Backpropagation", 1.77),
    ),
)

# the CPU-only system has no CPU-GPU communication row
CPU_ONLY_PROFILE = PhaseProfile(
    "CPU Only",
    (
        ("Trajectory Collection", "DNN Inference", 10.46),
        ("Trajectory Collection", "Environment Run", 60.71),
        ("Trajectory Collection", "Storing Trajectories", 4.75),
        ("GAE", "GAE Memory Fetch", 3.49),
        ("GAE", "GAE Computation", 11.23),
        ("GAE", "GAE Memory Write", 0.32),
        ("Network Update", "Loss Calculation", 6.10),
        ("Network Update", "Backpropagation", 2.95),
    ),
)

PROFILES = {"cpu-gpu": CPU_GPU_PROFILE, "cpu-only": CPU_ONLY_PROFILE}

GAE_SUBPHASES = ("GAE Memory Fetch", "GAE Computation", "GAE Memory Write")
MEMORY_SUBPHASES = (
    "Storing Trajectories",
    "GAE Memory Fetch",
    "GAE Memory Write",
    "CPU-GPU Communication",
)
MEMORY_SHARE_QUOTED = 11.73


def _check_names(profile: PhaseProfile, names) -> None:
    unknown = sorted(set(names) - profile.names())
    if unknown:
        raise ValidationError(f"unknown phase name(s) for {profile.system}: {unknown}")


def phase_share(profile: PhaseProfile, names) -> float:
    """Summed percentage of the listed phases or sub-phases (missing rows count 0)."""
    names = set(names)
    known = {"CPU-GPU Communication"}  # absent from the CPU-only column
    _check_names(profile, names - known)
    return math.fsum(p for ph, sub, p in profile.phases if ph in names or sub in names)


def profile_speedup(
    profile: PhaseProfile, accelerations: Mapping[str, float]
) -> tuple[float, float]:
    """Amdahl model: returns ``(new_time_fraction, speedup)``.

    Keys name a sub-phase or a whole phase; a factor of ``math.inf``
    eliminates it. When both a phase and one of its sub-phases are given,
    the sub-phase factor wins.
    """
    _check_names(profile, accelerations)
    for name, f in accelerations.items():
        if not f >= 1:
            raise ValidationError(f"acceleration for {name!r} must be >= 1, got {f}")
    remaining = []
    for ph, sub, p in profile.phases:
        f = accelerations.get(sub, accelerations.get(ph, 1.0))
        remaining.append(p / f)
    frac = math.fsum(remaining) / profile.total
    return frac, (math.inf if frac == 0 else 1.0 / frac)


def report_hw(
    cfg: SystolicConfig = SystolicConfig(),
    layout: LayoutConfig = LayoutConfig(),
    *,
    geometry: BramGeometry = BramGeometry(),
    baseline: float = BASELINE_ELEMENTS_PER_SECOND,
    dram_bandwidth: float = DDR4_BYTES_PER_SEC,
    device_blocks: int = DEVICE_BRAM_BLOCKS,
) -> dict:
    """Headline throughput, bandwidth and BRAM figures for one configuration."""
    pipe = cfg.pipeline
    agg = aggregate_throughput(cfg)
    demand = bandwidth_requirement(layout)
    read_demand = bandwidth_requirement(layout, include_writeback=False)
    dram = dram_bytes_per_cycle(dram_bandwidth, pipe.clock_hz)
    storage_blocks = bram_blocks_for_storage(layout, geometry)
    bw_blocks = bram_blocks_for_bandwidth(demand, geometry)
    return {
        "k": pipe.k,
        "feedback_latency": pipe.feedback_latency,
        "frontend_latency": pipe.frontend_latency,
        "clock_hz": pipe.clock_hz,
        "rows": cfg.rows,
        "initiation_interval": pipe.initiation_interval,
        "fill_cycles": pipe.fill_cycles,
        "cycles_per_trajectory": pipe.total_cycles(layout.timesteps),
        "per_pe_elements_per_second": pipe.clock_hz / pipe.initiation_interval,
        "aggregate_elements_per_second": agg,
        "baseline_elements_per_second": baseline,
        "speedup_vs_baseline": speedup_vs_baseline(agg, baseline),
        "num_traj": layout.num_traj,
        "timesteps": layout.timesteps,
        "element_bits": layout.element_bits,
        "writeback_bits": layout.writeback_bits,
        "in_place": layout.in_place,
        "read_bytes_per_cycle": read_demand,
        "bandwidth_bytes_per_cycle": demand,
        "dram_bytes_per_cycle": dram,
        "dram_read_shortfall_bytes_per_cycle": read_demand - dram,
        "storage_bytes": layout.total_bytes,
        "bram_blocks_storage": storage_blocks,
        "bram_ports_bandwidth": bw_blocks * geometry.ports_per_block,
        "bram_blocks_bandwidth": bw_blocks,
        "bram_blocks_required": max(storage_blocks, bw_blocks),
        "device_bram_blocks": device_blocks,
        "bram_storage_utilization_pct": 100.0 * storage_blocks / device_blocks,
        "bram_bandwidth_utilization_pct": 100.0 * bw_blocks / device_blocks,
    }
