"""On-chip FILO stack memory and the bandwidth / BRAM sizing arithmetic.

Layout: each bank is a ``[timestep][trajectory]`` array. One timestep row of
a bank is striped across BRAM blocks one 32-bit word at a time, so with
8-bit codes four trajectories share a word and 64 trajectories occupy 16
blocks per bank. Every block has two ports: collection pushes and GAE reads
use port A, in-place result writes use port B.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import ValidationError, check_positive_int

__all__ = [
    "LayoutConfig",
    "BramGeometry",
    "Access",
    "StackError",
    "StackMemory",
    "ConflictReport",
    "bandwidth_requirement",
    "dram_bytes_per_cycle",
    "bram_blocks_for_storage",
    "bram_blocks_for_bandwidth",
    "port_conflict_check",
    "steady_state_bytes_per_cycle",
]

PORT_READ = "A"
PORT_WRITE = "B"


class StackError(RuntimeError):
    """Illegal stack operation: overflow, underflow, or out-of-order access."""


@dataclass(frozen=True)
class LayoutConfig:
    num_traj: int = 64
    timesteps: int = 1024
    element_bits: int = 8
    writeback_bits: int | None = None
    in_place: bool = True

    def __post_init__(self):
        check_positive_int(self.num_traj, "num_traj")
        check_positive_int(self.timesteps, "timesteps")
        if self.element_bits not in (8, 16, 32):
            raise ValidationError(f"element_bits must be 8, 16 or 32, got {self.element_bits}")
        wb = self.element_bits if self.writeback_bits is None else self.writeback_bits
        if wb not in (8, 16, 32):
            raise ValidationError(f"writeback_bits must be 8, 16 or 32, got {wb}")
        if self.in_place and wb != self.element_bits:
            raise ValidationError("in-place writeback needs writeback_bits == element_bits")
        object.__setattr__(self, "writeback_bits", wb)

    @property
    def element_bytes(self) -> int:
        return self.element_bits // 8

    @property
    def writeback_bytes(self) -> int:
        return self.writeback_bits // 8

    @property
    def bytes_per_timestep(self) -> int:
        """Rewards plus values for every trajectory at one timestep."""
        return self.num_traj * self.element_bytes * 2

    @property
    def total_bytes(self) -> int:
        """Allocated bytes; results only add storage when not written in place."""
        total = self.bytes_per_timestep * self.timesteps
        if not self.in_place:
            total += self.num_traj * self.writeback_bytes * 2 * self.timesteps
        return total


@dataclass(frozen=True)
class BramGeometry:
    block_capacity_bits: int = 36 * 1024
    ports_per_block: int = 2
    bytes_per_port_per_cycle: int = 4

    @property
    def block_bytes(self) -> int:
        return self.block_capacity_bits // 8


def bandwidth_requirement(layout: LayoutConfig, include_writeback: bool = True) -> int:
    """Bytes per cycle to feed one PE per trajectory, both streams."""
    read = layout.num_traj * layout.element_bytes * 2
    write = layout.num_traj * layout.writeback_bytes * 2 if include_writeback else 0
    return read + write


def dram_bytes_per_cycle(bandwidth_bytes_per_sec: float, clock_hz: float) -> float:
    if not (bandwidth_bytes_per_sec > 0 and clock_hz > 0):
        raise ValidationError("bandwidth and clock must be positive")
    return bandwidth_bytes_per_sec / clock_hz


def bram_blocks_for_storage(layout: LayoutConfig, geometry: BramGeometry = BramGeometry()) -> int:
    return math.ceil(layout.total_bytes / geometry.block_bytes)


def bram_blocks_for_bandwidth(bytes_per_cycle: float, geometry: BramGeometry = BramGeometry()) -> int:
    if not bytes_per_cycle > 0:
        raise ValidationError(f"bandwidth demand must be positive, got {bytes_per_cycle}")
    per_block = geometry.bytes_per_port_per_cycle * geometry.ports_per_block
    return math.ceil(bytes_per_cycle / per_block)


class Access(NamedTuple):
    """One port transaction: a single word of one block in one cycle."""

    cycle: int
    bank: str
    block: int
    port: str
    address: int
    op: str  # "r" or "w"
    nbytes: int
    elements: int


@dataclass
class StackMemory:
    """FILO reward/value stack with per-port access tracing.

    Banks hold whatever element dtype the caller pushes: ``uint16`` codes in
    quantized mode, ``float64`` in full-precision mode (``element_bits`` then
    only drives the byte accounting). Operations are stamped with
    :attr:`clock`; the driver advances it with :meth:`tick`.
    """

    layout: LayoutConfig = field(default_factory=LayoutConfig)
    geometry: BramGeometry = field(default_factory=BramGeometry)
    dtype: type = np.uint16

    def __post_init__(self):
        shape = (self.layout.timesteps, self.layout.num_traj)
        names = ["RMB", "VMB"] if self.layout.in_place else ["RMB", "VMB", "AMB", "RTGMB"]
        self.banks = {name: np.zeros(shape, dtype=self.dtype) for name in names}
        self.depth = 0
        self.clock = 0
        self.trace: list[Access] = []
        self._popped: set[int] = set()
        self._written: set[int] = set()
        self._occupied: set[tuple[str, int]] = set()
        self.occupied_bytes = 0
        self.peak_occupied_bytes = 0

    def tick(self, cycles: int = 1) -> None:
        self.clock += cycles

    def _bank_bytes(self, bank: str) -> int:
        if bank in ("RMB", "VMB"):
            return self.layout.element_bytes
        return self.layout.writeback_bytes

    def _record(self, bank: str, t: int, op: str, port: str) -> None:
        width = self._bank_bytes(bank)
        per_word = max(1, self.geometry.bytes_per_port_per_cycle // width)
        n = self.layout.num_traj
        for block, first in enumerate(range(0, n, per_word)):
            count = min(per_word, n - first)
            self.trace.append(Access(self.clock, bank, block, port, t, op, count * width, count))

    def _occupy(self, bank: str, t: int) -> None:
        # BRAM contents persist after a pop; only first writes grow the footprint
        if (bank, t) not in self._occupied:
            self._occupied.add((bank, t))
            self.occupied_bytes += self._bank_bytes(bank) * self.layout.num_traj
            self.peak_occupied_bytes = max(self.peak_occupied_bytes, self.occupied_bytes)

    def _row(self, codes, name):
        row = np.asarray(codes)
        if row.shape != (self.layout.num_traj,):
            raise ValidationError(
                f"{name} must hold {self.layout.num_traj} entries, got shape {row.shape}"
            )
        return row

    def push_timestep(self, t: int, reward_codes, value_codes, port: str = PORT_READ) -> None:
        if t != self.depth:
            raise StackError(f"push of timestep {t} while stack depth is {self.depth}")
        if t >= self.layout.timesteps:
            raise StackError(f"stack overflow: capacity is {self.layout.timesteps} timesteps")
        for bank, codes in (("RMB", reward_codes), ("VMB", value_codes)):
            self.banks[bank][t] = self._row(codes, bank)
            self._record(bank, t, "w", port)
            self._occupy(bank, t)
        self._popped.discard(t)
        self._written.discard(t)
        self.depth += 1

    def pop_timestep(self, port: str = PORT_READ):
        if self.depth == 0:
            raise StackError("stack underflow")
        self.depth -= 1
        t = self.depth
        for bank in ("RMB", "VMB"):
            self._record(bank, t, "r", port)
        self._popped.add(t)
        return t, self.banks["RMB"][t].copy(), self.banks["VMB"][t].copy()

    def write_results(self, t: int, adv_codes, rtg_codes, port: str = PORT_WRITE) -> None:
        """Store one timestep of results, over the inputs when in place."""
        if t not in self._popped:
            raise StackError(f"timestep {t} has not been popped")
        if t in self._written:
            raise StackError(f"results for timestep {t} already written")
        targets = ("RMB", "VMB") if self.layout.in_place else ("AMB", "RTGMB")
        for bank, codes in zip(targets, (adv_codes, rtg_codes)):
            self.banks[bank][t] = self._row(codes, bank)
            self._record(bank, t, "w", port)
            self._occupy(bank, t)
        self._written.add(t)

    @property
    def advantage_bank(self) -> np.ndarray:
        return self.banks["RMB" if self.layout.in_place else "AMB"]

    @property
    def rtg_bank(self) -> np.ndarray:
        return self.banks["VMB" if self.layout.in_place else "RTGMB"]


@dataclass(frozen=True)
class ConflictReport:
    violations: tuple  # (cycle, bank, block, port, count)

    @property
    def ok(self) -> bool:
        return not self.violations


def port_conflict_check(trace, geometry: BramGeometry = BramGeometry()) -> ConflictReport:
    """At most one transaction per (block, port, cycle), on a port that exists."""
    valid_ports = {chr(ord("A") + i) for i in range(geometry.ports_per_block)}
    counts = Counter((a.cycle, a.bank, a.block, a.port) for a in trace)
    bad = [
        (cycle, bank, block, port, n)
        for (cycle, bank, block, port), n in counts.items()
        if n > 1 or port not in valid_ports
    ]
    bad.extend(
        (a.cycle, a.bank, a.block, a.port, 1)
        for a in trace
        if a.nbytes > geometry.bytes_per_port_per_cycle
    )
    return ConflictReport(tuple(sorted(bad)))


def steady_state_bytes_per_cycle(trace) -> dict[int, int]:
    """Bytes moved per cycle, for cycles that both read and write."""
    moved = defaultdict(int)
    ops = defaultdict(set)
    for a in trace:
        moved[a.cycle] += a.nbytes
        ops[a.cycle].add(a.op)
    return {c: b for c, b in moved.items() if ops[c] == {"r", "w"}}
