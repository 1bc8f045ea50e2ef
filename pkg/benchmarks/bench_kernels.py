"""Time the compiled and pure-Python kernels on workloads taken from the presets.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from egsloss import analytic, presets
from egsloss.simulator import EngineMode, _compile


def _backends():
    out = {"python": importlib.import_module("egsloss._pykernels")}
    try:
        out["cython"] = importlib.import_module("egsloss._ckernels")
    except ImportError:
        pass
    return out


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def accumulate_case(sc):
    traffic = analytic.scenario_traffic(sc)
    fu, fv = analytic._flow_nodes(sc)
    cu, cv, cres, clog = analytic._classes(sc, traffic)
    caps = np.array(sc.topology.qubits_per_node, dtype=np.int64)
    return cu, cv, cres, clog, fu, fv, caps, sc.topology.resource_count


def walk_case(engine: EngineMode, sessions: int):
    sc = presets.table1()
    comp = _compile(sc.session(0).periods, presets.T_ATTEMPT if engine is EngineMode.DISCRETE else None)
    rng = np.random.default_rng(1)
    n = comp.max_draws * sessions
    return engine.kernel_code, comp, rng.standard_exponential(n), rng.random(n), sessions


def run_walk(k, case):
    code, comp, expo, unif, sessions = case
    pos = 0
    seg_dur = np.zeros(comp.n_seg)
    seg_succ = np.zeros(comp.n_seg, dtype=np.int64)
    for _ in range(sessions):
        _, pos = k.walk_session(code, True,
                                comp.per_start, comp.per_len, comp.per_seg, comp.per_fixed, comp.per_mean,
                                comp.per_exit, comp.ph_mean, comp.ph_next, comp.ph_succ, expo, unif, pos,
                                seg_dur, seg_succ)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = _backends()
    cases = {
        "accumulate K=8 C=3 c=3": accumulate_case(presets.table1().with_resources(3).with_qubits(3)),
        "accumulate K=20 C=2 c=2": accumulate_case(presets.homogeneous_20(resources=2, qubits=2)),
        "accumulate K=8 C=1 c=2 jump-over": accumulate_case(
            presets.table1(mode="jump_over").with_qubits(2)),
    }
    walks = {"walk exponential x200": walk_case(EngineMode.EXPONENTIAL, 200),
             "walk cox x200": walk_case(EngineMode.COX, 200)}
    print(f"{'workload':32s}" + "".join(f"{b:>12s}" for b in backends) + "     speed-up")
    for name, case in cases.items():
        times = {b: _best(lambda k=k: k.accumulate_blocking(*case), args.repeat) for b, k in backends.items()}
        _report(name, times)
    for name, case in walks.items():
        times = {b: _best(lambda k=k: run_walk(k, case), args.repeat) for b, k in backends.items()}
        _report(name, times)


def _report(name, times):
    row = f"{name:32s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
    if "cython" in times:
        row += f"  {times['python'] / times['cython']:9.1f}x"
    print(row)


if __name__ == "__main__":
    main()
