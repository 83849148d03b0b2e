"""Command-line entry point: ``heppo {gae,variant,sweep,hw,mem,profile}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from ._validation import ValidationError
from .gae import GaeParams, Trajectory, compute_advantages
from .harness import (
    FIDELITY_COLUMNS,
    GAE_SUBPHASES,
    MEMORY_SHARE_QUOTED,
    MEMORY_SUBPHASES,
    PROFILES,
    STREAM_KINDS,
    StreamSpec,
    generate_streams,
    phase_share,
    profile_speedup,
    quant_sweep,
    report_hw,
    run_variant,
)
from .hw import PipelineConfig, SystolicConfig
from .memory import LayoutConfig, steady_state_bytes_per_cycle
from .pipeline import reference_results, run_stack_pipeline
from .quantization import DatapathVariant, QuantScheme


def load_trajectories(text: str) -> list[Trajectory]:
    """Parse ``[{"rewards": [...], "values": [...], "bootstrap": x}, ...]``.

    Errors carry the JSON path of the offending entry.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(doc, list) or not doc:
        raise ValidationError("input must be a nonempty JSON array of trajectories")
    out = []
    for i, item in enumerate(doc):
        where = f"[{i}]"
        if not isinstance(item, dict):
            raise ValidationError(f"{where}: expected an object")
        extra = set(item) - {"rewards", "values", "bootstrap"}
        if extra:
            raise ValidationError(f"{where}: unexpected key(s) {sorted(extra)}")
        arrays = {}
        for key in ("rewards", "values"):
            seq = item.get(key)
            if not isinstance(seq, list) or not seq:
                raise ValidationError(f"{where}.{key}: expected a nonempty array of numbers")
            for j, x in enumerate(seq):
                if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                    raise ValidationError(f"{where}.{key}[{j}]: expected a finite number, got {x!r}")
            arrays[key] = seq
        boot = item.get("bootstrap", 0.0)
        if isinstance(boot, bool) or not isinstance(boot, (int, float)) or not math.isfinite(boot):
            raise ValidationError(f"{where}.bootstrap: expected a finite number, got {boot!r}")
        if len(arrays["rewards"]) != len(arrays["values"]):
            raise ValidationError(
                f"{where}: rewards and values differ in length "
                f"({len(arrays['rewards'])} != {len(arrays['values'])})"
            )
        out.append(Trajectory(arrays["rewards"], arrays["values"], boot))
    return out


def _emit(rows: list[dict], columns, fmt: str, doc) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _csv_value(row[c]) for c in columns})
    return buf.getvalue()


def _csv_value(x):
    return repr(x) if isinstance(x, float) else x


def _params(args) -> GaeParams:
    return GaeParams(args.gamma, args.lam)


def _stream_spec(args) -> StreamSpec:
    return StreamSpec(
        kind=args.kind,
        num_traj=args.traj,
        timesteps=args.steps,
        seed=args.seed,
        epochs=args.epochs,
    )


def cmd_gae(args) -> str:
    if args.input == "-":
        text = sys.stdin.read()
    else:
        with open(args.input) as fh:
            text = fh.read()
    trajs = load_trajectories(text)
    params = _params(args)
    results = [compute_advantages(tr, params, args.k) for tr in trajs]
    rows = [
        {"trajectory": i, "t": t, "advantage": float(a), "rtg": float(g)}
        for i, res in enumerate(results)
        for t, (a, g) in enumerate(zip(res.advantages, res.rtgs))
    ]
    doc = {
        "gamma": params.gamma,
        "lambda": params.lam,
        "k": args.k,
        "trajectories": [
            {"advantages": res.advantages.tolist(), "rtgs": res.rtgs.tolist()} for res in results
        ],
    }
    return _emit(rows, ("trajectory", "t", "advantage", "rtg"), args.format, doc)


def cmd_variant(args) -> str:
    streams = generate_streams(_stream_spec(args))
    variants = list(DatapathVariant) if args.variant == "all" else [DatapathVariant(int(args.variant))]
    scheme = QuantScheme(args.bits, args.range)
    reports = [run_variant(streams, v, scheme, _params(args), args.k).as_row() for v in variants]
    return _emit(reports, FIDELITY_COLUMNS, args.format, {"stream": vars(_stream_spec(args)), "reports": reports})


def cmd_sweep(args) -> str:
    streams = generate_streams(_stream_spec(args))
    bits = range(args.bits_min, args.bits_max + 1)
    reports = [
        r.as_row()
        for r in quant_sweep(streams, bits, args.range, _params(args), DatapathVariant(args.variant))
    ]
    return _emit(reports, FIDELITY_COLUMNS, args.format, {"stream": vars(_stream_spec(args)), "reports": reports})


def _hw_configs(args):
    pipe = PipelineConfig(args.k or 1, args.latency, args.frontend, args.clock)
    layout = LayoutConfig(
        args.traj, args.steps, args.bits, args.writeback_bits, in_place=not args.no_in_place
    )
    return SystolicConfig(args.rows, pipe), layout


def cmd_hw(args) -> str:
    cfg, layout = _hw_configs(args)
    report = report_hw(cfg, layout, baseline=args.baseline)
    return _emit([report], report.keys(), args.format, report)


def cmd_mem(args) -> str:
    cfg, layout = _hw_configs(args)
    full = report_hw(cfg, layout)
    keys = [k for k in full if k.startswith(("bram", "dram", "storage", "read", "bandwidth", "device"))]
    report = {k: full[k] for k in ("num_traj", "timesteps", "element_bits", "writeback_bits", "in_place")}
    report.update({k: full[k] for k in keys})
    if args.simulate:
        streams = generate_streams(_stream_spec(args))[: args.traj]
        scheme = None if args.full_precision else QuantScheme(args.quant_bits, args.range)
        params = _params(args)
        run = run_stack_pipeline(streams, params, cfg.pipeline, scheme, in_place=not args.no_in_place)
        adv_ref, rtg_ref = reference_results(run, params)
        measured = sorted(set(steady_state_bytes_per_cycle(run.memory.trace).values()))
        report.update(
            {
                "sim_collect_cycles": run.collect_cycles,
                "sim_gae_cycles": run.gae_cycles,
                "sim_port_violations": len(run.conflicts.violations),
                "sim_steady_state_bytes_per_cycle": measured[0] if len(measured) == 1 else None,
                "sim_peak_occupied_bytes": run.memory.peak_occupied_bytes,
                "sim_max_abs_advantage_error": float(np.max(np.abs(run.advantages - adv_ref))),
                "sim_max_abs_rtg_error": float(np.max(np.abs(run.rtgs - rtg_ref))),
                "sim_advantage_error_bound": run.codecs[0].max_error if run.codecs else 0.0,
                "sim_rtg_error_bound": run.codecs[1].max_error if run.codecs else 0.0,
            }
        )
    return _emit([report], report.keys(), args.format, report)


def _parse_accel(items) -> dict:
    out = {}
    for item in items or ():
        name, sep, factor = item.rpartition("=")
        if not sep:
            raise ValidationError(f"--accelerate expects NAME=FACTOR, got {item!r}")
        try:
            out[name] = float(factor)
        except ValueError:
            raise ValidationError(f"--accelerate factor for {name!r} is not a number: {factor!r}")
    return out


def cmd_profile(args) -> str:
    profile = PROFILES[args.system]
    accel = {name: math.inf for name in (args.eliminate or GAE_SUBPHASES)}
    accel.update(_parse_accel(args.accelerate))
    frac, speedup = profile_speedup(profile, accel)
    memory = phase_share(profile, MEMORY_SUBPHASES)
    report = {
        "system": profile.system,
        "profile_total_pct": profile.total,
        "accelerated": ";".join(f"{k}={v}" for k, v in sorted(accel.items())),
        "accelerated_share_pct": phase_share(profile, accel),
        "new_time_fraction": frac,
        "time_reduction_pct": 100.0 * (1.0 - frac),
        "speedup": speedup,
        "memory_share_pct": memory,
        "memory_share_quoted_pct": MEMORY_SHARE_QUOTED,
        "memory_share_gap_pct": memory - MEMORY_SHARE_QUOTED,
    }
    return _emit([report], report.keys(), args.format, report)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--gamma", type=float, default=0.99)
    common.add_argument("--lambda", dest="lam", type=float, default=0.95)
    common.add_argument("--bits", type=int, default=8)
    common.add_argument("--range", type=float, default=4.0, help="quantizer half-width in std units")
    common.add_argument("--k", type=int, default=None, help="lookahead depth (default: sequential)")
    common.add_argument("--rows", type=int, default=64)
    common.add_argument("--traj", type=int, default=64)
    common.add_argument("--steps", type=int, default=1024)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    streams = argparse.ArgumentParser(add_help=False)
    streams.add_argument("--kind", choices=STREAM_KINDS, default="stationary-normal")
    streams.add_argument("--epochs", type=int, default=1)

    hw = argparse.ArgumentParser(add_help=False)
    hw.add_argument("--latency", type=int, default=2, help="feedback loop latency L")
    hw.add_argument("--frontend", type=int, default=4, help="front-end latency F")
    hw.add_argument("--clock", type=float, default=3.0e8)
    hw.add_argument("--writeback-bits", type=int, default=None)
    hw.add_argument("--no-in-place", action="store_true")

    parser = argparse.ArgumentParser(prog="heppo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gae", parents=[common], help="advantages and RTGs for a trajectory file")
    p.add_argument("input", help="JSON trajectory file, or - for stdin")
    p.set_defaults(func=cmd_gae)

    p = sub.add_parser("variant", parents=[common, streams], help="datapath variants 1-5")
    p.add_argument("--variant", choices=["1", "2", "3", "4", "5", "all"], default="all")
    p.set_defaults(func=cmd_variant)

    p = sub.add_parser("sweep", parents=[common, streams], help="bit-width fidelity sweep")
    p.add_argument("--bits-min", type=int, default=3)
    p.add_argument("--bits-max", type=int, default=10)
    p.add_argument("--variant", type=int, choices=range(1, 6), default=5)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hw", parents=[common, hw], help="cycle and throughput report")
    p.add_argument("--baseline", type=float, default=9000.0, help="software elements/s")
    p.set_defaults(func=cmd_hw, k=2)

    p = sub.add_parser("mem", parents=[common, streams, hw], help="bandwidth and BRAM report")
    p.add_argument("--simulate", action="store_true", help="also run the stack pipeline")
    p.add_argument("--full-precision", action="store_true")
    p.add_argument("--quant-bits", type=int, default=8)
    p.set_defaults(func=cmd_mem, k=2)

    p = sub.add_parser("profile", parents=[common], help="PPO phase-profile speedup model")
    p.add_argument("--system", choices=sorted(PROFILES), default="cpu-gpu")
    p.add_argument("--eliminate", action="append", metavar="PHASE")
    p.add_argument("--accelerate", action="append", metavar="PHASE=FACTOR")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (ValidationError, OSError) as exc:
        print(f"heppo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
