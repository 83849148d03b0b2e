import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heppo import ValidationError
from heppo.memory import (
    Access,
    BramGeometry,
    LayoutConfig,
    StackError,
    StackMemory,
    bandwidth_requirement,
    bram_blocks_for_bandwidth,
    bram_blocks_for_storage,
    dram_bytes_per_cycle,
    port_conflict_check,
    steady_state_bytes_per_cycle,
)


def small(in_place=True, n=4, T=3):
    return StackMemory(LayoutConfig(num_traj=n, timesteps=T, in_place=in_place))


def test_filo_order():
    mem = small()
    for t in range(3):
        mem.push_timestep(t, np.full(4, t), np.full(4, 10 + t))
    popped = [mem.pop_timestep() for _ in range(3)]
    assert [p[0] for p in popped] == [2, 1, 0]
    assert [int(p[1][0]) for p in popped] == [2, 1, 0]
    assert [int(p[2][0]) for p in popped] == [12, 11, 10]


def test_overflow_underflow_and_order():
    mem = small()
    with pytest.raises(StackError):
        mem.pop_timestep()
    with pytest.raises(StackError):
        mem.push_timestep(1, np.zeros(4), np.zeros(4))
    for t in range(3):
        mem.push_timestep(t, np.zeros(4), np.zeros(4))
    with pytest.raises(StackError):
        mem.push_timestep(3, np.zeros(4), np.zeros(4))
    with pytest.raises(ValidationError):
        small().push_timestep(0, np.zeros(5), np.zeros(4))


def test_write_rules():
    mem = small()
    mem.push_timestep(0, np.zeros(4), np.zeros(4))
    with pytest.raises(StackError):
        mem.write_results(0, np.ones(4), np.ones(4))
    t, _, _ = mem.pop_timestep()
    mem.write_results(t, np.ones(4), np.full(4, 2))
    with pytest.raises(StackError):
        mem.write_results(t, np.ones(4), np.ones(4))
    assert mem.advantage_bank is mem.banks["RMB"]
    assert mem.rtg_bank[0].tolist() == [2, 2, 2, 2]


def test_separate_result_banks_keep_inputs():
    mem = small(in_place=False)
    mem.push_timestep(0, np.full(4, 7), np.full(4, 8))
    t, _, _ = mem.pop_timestep()
    mem.write_results(t, np.ones(4), np.full(4, 2))
    assert mem.banks["RMB"][0].tolist() == [7] * 4
    assert mem.advantage_bank[0].tolist() == [1] * 4
    assert set(mem.banks) == {"RMB", "VMB", "AMB", "RTGMB"}


def _fill_and_drain(mem):
    T = mem.layout.timesteps
    n = mem.layout.num_traj
    for t in range(T):
        mem.push_timestep(t, np.zeros(n), np.zeros(n))
        mem.tick()
    for _ in range(T):
        t, _, _ = mem.pop_timestep()
        mem.write_results(t, np.zeros(n), np.zeros(n))
        mem.tick()
    return mem


def test_in_place_halves_peak_storage():
    a = _fill_and_drain(small(True, n=8, T=16))
    b = _fill_and_drain(small(False, n=8, T=16))
    assert a.peak_occupied_bytes == a.layout.total_bytes == 8 * 2 * 16
    assert b.peak_occupied_bytes == 2 * a.peak_occupied_bytes == b.layout.total_bytes


def test_trace_striping_and_ports():
    mem = small(n=8, T=2)
    mem.push_timestep(0, np.zeros(8), np.zeros(8))
    # 8 one-byte codes -> 2 blocks of 4 per bank
    assert len(mem.trace) == 4
    assert all(a.port == "A" and a.nbytes == 4 and a.elements == 4 for a in mem.trace)
    assert port_conflict_check(mem.trace).ok


def test_conflict_checker_flags_double_use():
    acc = Access(0, "RMB", 0, "A", 0, "r", 4, 4)
    assert not port_conflict_check([acc, acc]).ok
    assert not port_conflict_check([acc._replace(port="C")]).ok
    assert not port_conflict_check([acc._replace(nbytes=8)]).ok
    assert port_conflict_check([acc, acc._replace(port="B")]).ok


def test_steady_state_counts_mixed_cycles_only():
    trace = [
        Access(0, "RMB", 0, "A", 0, "w", 4, 4),
        Access(1, "RMB", 0, "A", 0, "r", 4, 4),
        Access(1, "RMB", 0, "B", 1, "w", 4, 4),
    ]
    assert steady_state_bytes_per_cycle(trace) == {1: 8}


# --- calculators --------------------------------------------------------------


def test_layout_validation():
    with pytest.raises(ValidationError):
        LayoutConfig(element_bits=12)
    with pytest.raises(ValidationError):
        LayoutConfig(element_bits=8, writeback_bits=16, in_place=True)
    assert LayoutConfig(element_bits=8, writeback_bits=16, in_place=False).writeback_bytes == 2


def test_bandwidth_examples():
    assert bandwidth_requirement(LayoutConfig(element_bits=32), include_writeback=False) == 512
    assert bandwidth_requirement(LayoutConfig(element_bits=8)) == 256
    assert bandwidth_requirement(LayoutConfig(num_traj=1, element_bits=8), include_writeback=False) == 2
    ddr = dram_bytes_per_cycle(25e9, 3e8)
    assert abs(ddr - 83.33) <= 0.1
    assert abs((512 - ddr) - 428.7) <= 0.1
    with pytest.raises(ValidationError):
        dram_bytes_per_cycle(0, 3e8)


def test_bram_examples():
    geo = BramGeometry()
    assert geo.block_bytes == 4608
    assert bram_blocks_for_storage(LayoutConfig()) == 29
    assert bram_blocks_for_storage(LayoutConfig(num_traj=1, timesteps=1)) == 1
    assert bram_blocks_for_storage(LayoutConfig(element_bits=32)) == 114
    assert bram_blocks_for_bandwidth(256) == 32
    assert bram_blocks_for_bandwidth(1) == 1
    assert 2 * bram_blocks_for_bandwidth(256) == 64
    with pytest.raises(ValidationError):
        bram_blocks_for_bandwidth(0)


@given(st.integers(1, 128), st.integers(1, 4096), st.integers(1, 4096))
def test_storage_is_monotone_in_timesteps(n, t1, t2):
    lo, hi = sorted((t1, t2))
    assert bram_blocks_for_storage(LayoutConfig(num_traj=n, timesteps=lo)) <= bram_blocks_for_storage(
        LayoutConfig(num_traj=n, timesteps=hi)
    )
