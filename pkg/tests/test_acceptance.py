"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from heppo.gae import GaeParams, gae_lookahead, gae_sequential, gae_truncated_sum
from heppo.harness import (
    CPU_GPU_PROFILE,
    GAE_SUBPHASES,
    StreamSpec,
    generate_streams,
    profile_speedup,
    report_hw,
)
from heppo.hw import (
    PipelineConfig,
    SystolicConfig,
    aggregate_throughput,
    initiation_interval,
    simulate_pe,
    speedup_vs_baseline,
)
from heppo.memory import LayoutConfig
from heppo.pipeline import reference_results, run_stack_pipeline
from heppo.quantization import QuantScheme, dequantize_array, quantize_array
from heppo.standardization import RunningStats, running_std, running_update_many

DECAYS = (0.0, 0.5, 0.9405, 1.0)


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(n, title):
        start = time.perf_counter()
        notes = []
        try:
            yield notes
        except BaseException as exc:
            with capsys.disabled():
                print(f"\ncriterion {n}: FAIL  {title}: {exc}")
            raise
        took = time.perf_counter() - start
        detail = "; ".join(notes)
        with capsys.disabled():
            print(f"\ncriterion {n}: PASS  {title} ({detail}; {took:.1f}s)")

    return run


def rel_err(a, b):
    """Normwise relative error; an all-zero reference must be matched exactly."""
    a, b = np.asarray(a), np.asarray(b)
    scale = np.max(np.abs(b))
    diff = np.max(np.abs(a - b))
    return diff / scale if scale > 0 else (0.0 if diff == 0 else math.inf)


def test_criterion_1_gae_oracle_equivalence(criterion):
    with criterion(1, "GAE oracle equivalence") as notes:
        start = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(1))
        worst = 0.0
        count = 1000
        for i in range(count):
            C = DECAYS[i % 4]
            T = 4096 if i < 4 else int(rng.integers(1, 4097))
            d = rng.normal(0.0, 10.0 ** rng.uniform(-3, 3), T)
            seq = gae_sequential(d, C)
            worst = max(worst, rel_err(gae_truncated_sum(d, C), seq))
            for k in range(1, 9):
                worst = max(worst, rel_err(gae_lookahead(d, C, k), seq))
        took = time.perf_counter() - start
        notes += [f"{count} trajectories", f"max rel err {worst:.2e}"]
        assert worst <= 1e-9, f"max relative error {worst:.3e} > 1e-9"
        assert took <= 60.0, f"runtime {took:.1f}s > 60s"


# Rows for T = 4 (indices 0..3, last index is 3). Each form maps a term to its
# power of C: ("d", j) is delta_j and ("A", j) is A_j.
DECOMPOSITION = {
    3: [{("d", 3): 0}],
    2: [{("d", 3): 1, ("d", 2): 0}, {("A", 3): 1, ("d", 2): 0}],
    1: [
        {("d", 3): 2, ("d", 2): 1, ("d", 1): 0},
        {("A", 3): 2, ("d", 2): 1, ("d", 1): 0},
    ],
    0: [
        {("d", 3): 3, ("d", 2): 2, ("d", 1): 1, ("d", 0): 0},
        {("A", 2): 2, ("d", 1): 1, ("d", 0): 0},
        {("A", 3): 3, ("d", 2): 2, ("d", 1): 1, ("d", 0): 0},
    ],
}


def test_criterion_2_decomposition_rows(criterion):
    with criterion(2, "T=4 decomposition rows") as notes:
        T = 4
        rng = np.random.Generator(np.random.PCG64(2))
        worst = 0.0
        for C in rng.uniform(0.0, 1.0, 5):
            # coefficient of delta_j in A_t, read off by feeding unit impulses
            coef = np.stack([gae_sequential(np.eye(T)[j], C) for j in range(T)], axis=1)
            d = rng.normal(size=T)
            A = gae_sequential(d, C)
            for t, forms in DECOMPOSITION.items():
                for form in forms:
                    if all(kind == "d" for kind, _ in form):
                        want = np.zeros(T)
                        for (_, j), e in form.items():
                            want[j] = C**e
                        worst = max(worst, float(np.max(np.abs(coef[t] - want))))
                    value = sum(C**e * (d[j] if kind == "d" else A[j]) for (kind, j), e in form.items())
                    worst = max(worst, abs(A[t] - value))
        notes.append(f"5 values of C, max err {worst:.1e}")
        assert worst <= 1e-12, f"max error {worst:.3e} > 1e-12"


def two_pass(xs):
    mean = math.fsum(xs) / len(xs)
    return mean, math.sqrt(math.fsum((xs - mean) ** 2) / len(xs))


def test_criterion_3_welford(criterion):
    with criterion(3, "Welford vs two-pass") as notes:
        rng = np.random.Generator(np.random.PCG64(3))
        worst = 0.0
        checkpoints = [10, 100, 1000, 10_000, 100_000, 1_000_000]
        for scale in (1e-3, 1e-1, 1.0, 1e3, 1e6):
            xs = rng.normal(5.0 * scale, scale, checkpoints[-1])
            stats, done = RunningStats(), 0
            for n in checkpoints:
                stats = running_update_many(stats, xs[done:n])
                done = n
                mean, std = two_pass(xs[:n])
                worst = max(worst, abs(stats.mean - mean) / abs(mean), abs(running_std(stats) - std) / std)
        notes.append(f"max rel err {worst:.1e}")
        assert worst <= 1e-9, f"max relative error {worst:.3e} > 1e-9"


def test_criterion_4_quantizer_bound(criterion):
    with criterion(4, "quantizer bound, monotonicity, saturation") as notes:
        rng = np.random.Generator(np.random.PCG64(4))
        violations = 0
        samples = 0
        for bits in range(2, 17):
            s = QuantScheme(bits, 4.0)
            n = 1_000_000 if bits == 8 else 100_000
            x = np.concatenate([rng.uniform(-s.range_, s.range_, n), [-s.range_, s.range_, 0.0, -0.0]])
            codes = quantize_array(x, s)
            err = np.abs(dequantize_array(codes, s) - x)
            violations += int(np.count_nonzero(err > s.step / 2))
            samples += x.size

            # monotone over a span that includes saturated magnitudes
            mags = 10.0 ** rng.uniform(-12, 308, 10_000)
            y = np.sort(np.concatenate([x[:10_000], mags, -mags]))
            assert np.all(np.diff(quantize_array(y, s).astype(np.int64)) >= 0), f"non-monotone at {bits} bits"
            assert np.all(quantize_array(mags + s.range_, s) == s.levels - 1), "upper saturation"
            assert np.all(quantize_array(-mags - s.range_, s) == 0), "lower saturation"
        notes += [f"{samples} samples", f"{violations} violations"]
        assert violations == 0, f"{violations} samples exceeded step/2"


def test_criterion_5_hw_arithmetic(criterion):
    with criterion(5, "hardware arithmetic") as notes:
        assert initiation_interval(2, 2) == 1
        cfg = PipelineConfig(k=2, feedback_latency=2, clock_hz=300e6)
        rng = np.random.Generator(np.random.PCG64(5))
        _, rep = simulate_pe(rng.normal(size=1024), rng.normal(size=1024), GaeParams(), cfg)
        assert rep.elements_per_second == 3.0e8, rep.elements_per_second
        assert rep.total_cycles == cfg.fill_cycles + 1023 * rep.initiation_interval
        ratio = speedup_vs_baseline(aggregate_throughput(SystolicConfig(64, cfg)), 9000.0)
        assert 1.9e6 <= ratio <= 2.4e6, ratio
        notes += [f"{rep.elements_per_second:.3g} elem/s per PE", f"cycles {rep.total_cycles}", f"speedup {ratio:.4g}"]


def test_criterion_6_memory_arithmetic(criterion):
    with criterion(6, "memory arithmetic") as notes:
        wide = report_hw(layout=LayoutConfig(element_bits=32))
        narrow = report_hw(layout=LayoutConfig(element_bits=8, in_place=True))
        assert wide["read_bytes_per_cycle"] == 512
        assert abs(wide["dram_bytes_per_cycle"] - 83.33) <= 0.1
        assert abs(wide["dram_read_shortfall_bytes_per_cycle"] - 428.7) <= 0.1
        assert narrow["bandwidth_bytes_per_cycle"] == 256
        assert narrow["bram_blocks_storage"] == 29
        assert narrow["bram_blocks_bandwidth"] == 32
        notes.append(
            f"512, {wide['dram_bytes_per_cycle']:.2f}, {wide['dram_read_shortfall_bytes_per_cycle']:.2f}, 256, 29, 32"
        )


def test_criterion_7_end_to_end_pipeline(criterion):
    with criterion(7, "stack pipeline end to end") as notes:
        start = time.perf_counter()
        params = GaeParams()
        streams = generate_streams(StreamSpec(num_traj=64, timesteps=1024, seed=7))

        run = run_stack_pipeline(streams, params, scheme=QuantScheme(8, 4.0), in_place=True)
        adv, rtg = reference_results(run, params)
        a_err = float(np.max(np.abs(run.advantages - adv)))
        g_err = float(np.max(np.abs(run.rtgs - rtg)))
        a_bound, g_bound = (c.max_error for c in run.codecs)
        assert a_err <= a_bound, f"advantage error {a_err} > {a_bound}"
        assert g_err <= g_bound, f"rtg error {g_err} > {g_bound}"
        assert run.conflicts.ok, f"{len(run.conflicts.violations)} port conflicts"

        full = run_stack_pipeline(streams, params, scheme=None, in_place=True)
        f_adv, f_rtg = reference_results(full, params)
        worst = max(rel_err(full.advantages, f_adv), rel_err(full.rtgs, f_rtg))
        assert worst <= 1e-9, f"full-precision relative error {worst:.3e}"
        assert full.conflicts.ok
        took = time.perf_counter() - start
        assert took <= 120.0, f"runtime {took:.1f}s > 120s"
        notes += [
            f"adv {a_err:.3g}<={a_bound:.3g}",
            f"rtg {g_err:.3g}<={g_bound:.3g}",
            f"full precision {worst:.1e}",
            "0 conflicts",
        ]


def test_criterion_8_profile_model(criterion):
    with criterion(8, "profile model") as notes:
        frac, speedup = profile_speedup(CPU_GPU_PROFILE, {n: math.inf for n in GAE_SUBPHASES})
        reduction = 100.0 * (1.0 - frac)
        assert abs(reduction - 29.96) <= 0.01, reduction
        rng = np.random.Generator(np.random.PCG64(8))
        subs = [sub for _, sub, _ in CPU_GPU_PROFILE.phases]
        worst = abs(speedup * frac - 1.0)
        for _ in range(1000):
            picked = rng.choice(subs, size=int(rng.integers(0, len(subs) + 1)), replace=False)
            accel = {str(s): float(10.0 ** rng.uniform(0, 6)) for s in picked}
            f, sp = profile_speedup(CPU_GPU_PROFILE, accel)
            want = math.fsum(p / accel.get(sub, 1.0) for _, sub, p in CPU_GPU_PROFILE.phases)
            want /= CPU_GPU_PROFILE.total
            worst = max(worst, abs(f - want), abs(sp * f - 1.0))
        assert worst <= 1e-12, worst
        notes += [f"time reduction {reduction:.3f}%", f"identity err {worst:.1e}"]


def test_criterion_9_cli_determinism(criterion, tmp_path):
    with criterion(9, "CLI determinism") as notes:
        rng = np.random.Generator(np.random.PCG64(9))
        doc = [
            {"rewards": rng.normal(size=50).tolist(), "values": rng.normal(size=50).tolist(), "bootstrap": 0.5}
            for _ in range(3)
        ]
        path = tmp_path / "trajectories.json"
        path.write_text(json.dumps(doc))
        small = ["--traj", "8", "--steps", "256"]
        commands = [
            ["gae", str(path)],
            ["gae", str(path), "--k", "4"],
            ["variant", *small],
            ["sweep", *small],
            ["hw"],
            ["mem"],
            ["mem", "--simulate"],
            ["profile"],
        ]
        for argv in commands:
            for fmt in ("json", "csv"):
                full = [sys.executable, "-m", "heppo.cli", *argv, "--format", fmt]
                a = subprocess.run(full, capture_output=True, check=True).stdout
                b = subprocess.run(full, capture_output=True, check=True).stdout
                assert a and a == b, f"{' '.join(argv)} --format {fmt} differs between runs"
        notes.append(f"{len(commands) * 2} command lines, 2 runs each")
