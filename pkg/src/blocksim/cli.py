"""Command-line interface: compile, run, sweep, trace."""

from __future__ import annotations

import argparse
import itertools
import json
import sys

from .compiler import compile_program, lower_for_baseline
from .config import ConfigError, CoreConfig, parse_overrides
from .energy import EnergyParams
from .harness import CORES, make_core, sweep, write_sweep_csv
from .isa import AsmError, emit_program, parse_program
from .kernels import KERNELS, kernel_source


def _load_program(args):
    if getattr(args, "kernel", None):
        return parse_program(kernel_source(args.kernel))
    with open(args.program) as f:
        return parse_program(f.read())


def _load_config(args) -> CoreConfig:
    cfg = CoreConfig.load(args.config) if args.config else CoreConfig()
    if args.set:
        cfg = cfg.replace(**parse_overrides(args.set))
    return cfg


def _load_params(args) -> EnergyParams | None:
    return EnergyParams.load(args.energy_params) if args.energy_params else None


def cmd_compile(args) -> int:
    with open(args.input) as f:
        prog = parse_program(f.read())
    out = compile_program(prog, schedule=not args.no_schedule)
    if args.baseline:
        out = lower_for_baseline(out)
    text = emit_program(out)
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    prog = _load_program(args)
    cfg = _load_config(args)
    params = _load_params(args)
    trace = [] if args.trace else None
    core = make_core(prog, cfg, args.core, params, trace)
    stats = core.run(max_cycles=args.max_cycles)
    state = core.arch_state()
    report = stats.to_dict()
    report["arch_globals"] = {
        f"g{i}": v for i, v in enumerate(state.globals_) if v
    }
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.json:
        with open(args.json, "w") as f:
            f.write(out + "\n")
    else:
        print(out)
    if args.trace:
        with open(args.trace, "w") as f:
            for ev in trace:
                f.write(json.dumps(ev) + "\n")
    if args.unit_csv:
        core.ledger.write_csv(args.unit_csv)
    return 0


def cmd_sweep(args) -> int:
    if args.kernels:
        names = args.kernels.split(",")
        programs = {n: parse_program(kernel_source(n)) for n in names}
    else:
        programs = {}
        for path in args.programs:
            with open(path) as f:
                programs[path] = parse_program(f.read())
    if not programs:
        print("nothing to sweep: give --kernels or program files", file=sys.stderr)
        return 2
    base = _load_config(args)
    axes = []
    for spec in args.param or []:
        key, _, vals = spec.partition("=")
        axes.append([(key.strip(), int(v)) for v in vals.split(",")])
    configs = []
    for combo in itertools.product(*axes) if axes else [()]:
        configs.append(base.replace(**dict(combo)))
    cores = tuple(args.cores.split(",")) if args.cores else CORES
    rows = sweep(programs, configs, cores, _load_params(args))
    write_sweep_csv(rows, args.output)
    print(f"{len(rows)} rows -> {args.output}")
    return 0


def _add_common_run_args(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VAL", help="config override")
    p.add_argument("--energy-params", help="energy parameter file")
    p.add_argument("--max-cycles", type=int, default=2_000_000)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="blocksim")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("compile", help="classify, schedule, and partition a program")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--no-schedule", action="store_true", help="skip list scheduling")
    p.add_argument("--baseline", action="store_true", help="emit the bare all-global form")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="simulate one program on one core")
    p.add_argument("program", nargs="?")
    p.add_argument("--kernel", choices=sorted(KERNELS) + ["skipahead_pair"])
    p.add_argument("--core", choices=CORES, default="cgooo")
    p.add_argument("--trace", help="write JSON-lines event trace here")
    p.add_argument("--json", help="write the stats report here instead of stdout")
    p.add_argument("--unit-csv", help="write the per-unit energy report here")
    _add_common_run_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("trace", help="run with an event trace (shorthand)")
    p.add_argument("program", nargs="?")
    p.add_argument("--kernel", choices=sorted(KERNELS) + ["skipahead_pair"])
    p.add_argument("--core", choices=CORES, default="cgooo")
    p.add_argument("-o", "--trace", required=True)
    p.add_argument("--json", help="write the stats report here")
    p.add_argument("--unit-csv")
    _add_common_run_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="grid of configs x programs x cores to CSV")
    p.add_argument("programs", nargs="*")
    p.add_argument("--kernels", help="comma-separated kernel names")
    p.add_argument("--cores", help="comma-separated subset of cgooo,ooo,ino")
    p.add_argument("--param", action="append", metavar="KEY=V1,V2,...",
                   help="sweep axis (cross product across repeats)")
    p.add_argument("-o", "--output", required=True)
    _add_common_run_args(p)
    p.set_defaults(fn=cmd_sweep)

    args = ap.parse_args(argv)
    if args.cmd in ("run", "trace") and not (args.program or args.kernel):
        ap.error("give a program file or --kernel")
    try:
        return args.fn(args)
    except (AsmError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
