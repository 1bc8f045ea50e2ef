"""Command-line interface: ``egsloss {presets,blocking,simulate,oracle,sweep,delta}``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from egsloss import analytic, oracle, presets
from egsloss.model import ScenarioError, ServiceMode
from egsloss.scenario_io import load_scenario, save_scenario
from egsloss.simulator import EngineMode, run_replications, aggregate_runs
from egsloss.sweep import SweepSpec, error_table, read_csv, rows_to_csv, run_sweep

MODES = [m.value for m in ServiceMode]
ENGINES = [e.value for e in EngineMode]


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(choices):
    def parse(text: str) -> list[str]:
        out = [x.strip() for x in text.split(",") if x.strip()]
        bad = [x for x in out if x not in choices]
        if bad:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {', '.join(bad)}; choose from {', '.join(choices)}")
        return out
    return parse


def _add_scenario(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-s", "--scenario", help="scenario JSON file")
    g.add_argument("-p", "--preset", choices=sorted(presets.scenario_presets()), help="built-in scenario")
    p.add_argument("--mode", choices=MODES, help="override the service mode")
    p.add_argument("--rate", type=float, help="set every flow's arrival rate (1/s)")


def _scenario(args):
    sc = load_scenario(args.scenario) if args.scenario else presets.get_preset(args.preset)
    if args.mode:
        sc = sc.with_mode(args.mode)
    if args.rate is not None:
        sc = sc.with_rates(args.rate)
    return sc


def cmd_presets(args) -> int:
    if args.dump:
        name, path = args.dump
        save_scenario(presets.get_preset(name), path)
        print(f"wrote {name} to {path}")
        return 0
    for name, text in presets.DESCRIPTIONS.items():
        print(f"{name:16s} {text}")
    return 0


def cmd_blocking(args) -> int:
    sc = _scenario(args)
    res = analytic.analyze(sc)
    out = {"service_mode": sc.service_mode.value, "average_blocking": res.average,
           "idle_probability": res.idle_probability,
           "flows": [{"nodes": list(f.nodes), "session_type": f.session_type, "group": f.group,
                      "blocking": float(b)} for f, b in zip(sc.flows, res.flow_blocking)]}
    if args.json:
        print(json.dumps(out, indent=2))
        return 0
    print(f"service mode      {out['service_mode']}")
    print(f"average blocking  {res.average:.6g}")
    print(f"P(resource idle)  {res.idle_probability:.6g}")
    for g in sc.groups():
        print(f"group {g:11s} {analytic.mean_blocking_over(res, sc.flows_in_group(g)):.6g}")
    if args.per_flow:
        for i, f in enumerate(sc.flows):
            print(f"  f{i:<3d} {f.nodes} {f.session_type}  {res.flow_blocking[i]:.6g}")
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    runs = run_replications(sc, args.engine, args.duration, args.seed, args.replications, args.workers)
    sm = aggregate_runs(runs)
    if args.json:
        print(json.dumps({"runs": [r.to_dict() for r in runs]}, indent=1))
        return 0
    print(f"engine {args.engine}, mode {sc.service_mode.value}, {sm.replications} x {args.duration:g} s, seed {args.seed}")
    print(f"blocking (mean over flows)   {sm.blocking_avg:.6g} +- {sm.blocking_avg_sem:.2g}")
    print(f"blocking (pooled requests)   {sm.blocking_pooled:.6g} +- {sm.blocking_pooled_sem:.2g}")
    if sc.service_mode is ServiceMode.JUMP_OVER:
        print(f"first-call / retrial         {sm.first_call_blocking:.6g} / {sm.retrial_blocking:.6g}")
    print(f"resource idle ratio          {sm.idle_ratio:.6g}")
    print(f"entanglement per run         {sm.entanglement_total:.6g}")
    print(f"mean service time            {sm.mean_service_time * 1e3:.6g} ms")
    print(f"analytic average blocking    {analytic.average_blocking(sc):.6g}")
    return 0


def cmd_oracle(args) -> int:
    sc = _scenario(args)
    gen = oracle.build_ctmc(sc, args.state_cap)
    pi = oracle.stationary_distribution(gen)
    ana = analytic.blocking_probabilities(sc)
    print(f"{gen.size} states")
    for i in range(sc.flow_count):
        ob = oracle.oracle_blocking(gen, pi, i)
        print(f"  f{i:<3d} oracle {ob:.12g}  analytic {ana[i]:.12g}  diff {abs(ob - ana[i]):.2e}")
    if args.dump:
        oracle.dump(gen, pi, args.dump)
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    spec = SweepSpec(sc, args.values, args.axis, args.engines, args.modes, args.replications, args.seed,
                     args.duration, not args.no_analytic, args.per_flow, args.rates, args.workers, args.output)
    rows = run_sweep(spec)
    if not args.output:
        sys.stdout.write(rows_to_csv(rows))
    for name, delta in error_table(rows).items():
        print(f"delta[{name}] = {delta:.4g}", file=sys.stderr)
    return 0


def cmd_delta(args) -> int:
    for name, delta in error_table(read_csv(args.csv), args.row).items():
        print(f"{name:28s} {delta:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egsloss", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list built-in scenarios or dump one to JSON")
    p.add_argument("--dump", nargs=2, metavar=("NAME", "PATH"))
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("blocking", help="closed-form blocking probabilities")
    _add_scenario(p)
    p.add_argument("--per-flow", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_blocking)

    p = sub.add_parser("simulate", help="run simulation replications")
    _add_scenario(p)
    p.add_argument("--engine", choices=ENGINES, default="cox", help="default: %(default)s")
    p.add_argument("--duration", type=float, default=115.0, help="simulated seconds per run (default: %(default)s)")
    p.add_argument("--replications", type=int, default=10, help="default: %(default)s")
    p.add_argument("--seed", type=int, default=0, help="default: %(default)s")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: %(default)s)")
    p.add_argument("--json", action="store_true", help="print per-run metrics as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="solve the phase-level CTMC of a tiny scenario")
    _add_scenario(p)
    p.add_argument("--state-cap", type=int, default=oracle.DEFAULT_STATE_CAP, help="default: %(default)s")
    p.add_argument("--dump", metavar="PATH", help="write states and stationary vector as JSON")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="sweep a parameter and write CSV")
    _add_scenario(p)
    p.add_argument("--axis", choices=["rate", "qubits", "resources"], default="rate", help="default: %(default)s")
    p.add_argument("--values", type=_floats, required=True, help="comma-separated sweep values")
    p.add_argument("--rates", type=_floats, help="second axis of arrival rates for qubit/resource grids")
    p.add_argument("--engines", type=_names(ENGINES), default=[], help="comma-separated engines (default: none)")
    p.add_argument("--modes", type=_names(MODES), help="comma-separated service modes (default: scenario's)")
    p.add_argument("--replications", type=int, default=10, help="default: %(default)s")
    p.add_argument("--seed", type=int, default=0, help="default: %(default)s")
    p.add_argument("--duration", type=float, default=115.0, help="simulated seconds per run (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="worker processes per point (default: %(default)s)")
    p.add_argument("--per-flow", action="store_true", help="add one row per flow")
    p.add_argument("--no-analytic", action="store_true", help="skip the analytic series")
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("delta", help="error metric of each simulated series in a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--row", default="avg", help="flow_id_or_avg row to compare (default: %(default)s)")
    p.set_defaults(func=cmd_delta)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, KeyError, ValueError) as exc:
        print(f"egsloss: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
