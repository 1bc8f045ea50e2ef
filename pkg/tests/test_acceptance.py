"""Exit criteria.  Each test prints one PASS/FAIL line; the lines are repeated in the terminal summary.

The simulation criteria are long (most of the suite's runtime).  Select or
skip them with ``-m acceptance`` / ``-m "not acceptance"``.
"""
import dataclasses
import itertools
import math
import os
import time

import numpy as np
import pytest

from egsloss import analytic, oracle, presets
from egsloss.model import (
    EXPONENTIAL,
    TABLE_COX,
    CoxShape,
    SessionLayout,
    homogeneous_scenario,
    session_mean_duration,
)
from egsloss.simulator import EngineMode, simulate
from egsloss.sweep import compute_error_metric

from helpers import one_flow, random_tiny_scenario, single_phase_session

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []
WORKERS = os.cpu_count() or 1
ENGINES = list(EngineMode)
RUN = 1150.73  # seconds of simulated time per replication in the long checks


def verdict(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    RESULTS.append(line)
    assert ok, line


def within(a, sa, b, sb, k=3.0):
    return abs(a - b) <= k * math.hypot(sa, sb)


def test_c1_oracle_equivalence():
    t0 = time.perf_counter()
    worst, used, skipped = 0.0, {m: 0 for m in ("strict_single", "strict_multiple", "jump_over")}, 0
    for seed in itertools.count():
        mode = list(used)[seed % 3]
        if used[mode] >= 8:
            if all(v >= 8 for v in used.values()):
                break
            continue
        sc = random_tiny_scenario(np.random.default_rng(1000 + seed), mode)
        try:
            res = oracle.solve(sc, state_cap=50_000)
        except oracle.StateSpaceTooLarge:
            skipped += 1
            continue
        live = sc.rates() > 0
        diff = np.abs(res.flow_blocking - analytic.blocking_probabilities(sc))[live]
        worst = max(worst, float(diff.max()))
        used[mode] += 1
    elapsed = time.perf_counter() - t0
    n = sum(used.values())
    verdict("C1 oracle equivalence", n >= 20 and worst <= 1e-9 and elapsed < 60,
            f"{n} instances ({skipped} over the state cap skipped), max |diff| {worst:.2e}, {elapsed:.1f}s")


def test_c2_erlang_reduction():
    worst = 0.0
    for C in range(1, 11):
        for rho in (0.1, 1.0, 5.0):
            sc = one_flow((C + 1, C + 1), C, rate=rho, session=single_phase_session(1.0))
            got = analytic.blocking_probability(sc, 0)
            ref = analytic.erlang_b(C, rho)
            worst = max(worst, abs(got - ref) / ref)
    verdict("C2 Erlang-B reduction", worst <= 1e-12, f"30 cases, max relative diff {worst:.2e}")


# --- insensitivity -----------------------------------------------------------

ERLANG3 = CoxShape((1, 1, 1), (1, 1))
HYPER = CoxShape((0.2, 6.0), (0.15,))
STEEP = CoxShape((0.5, 1.0, 2.0, 4.0), (0.7, 0.5, 0.3))


def small(mode, attempt=EXPONENTIAL, gap=EXPONENTIAL, qubits=2, resources=2, rate=12.0):
    lay = SessionLayout("s", 5, 3, 4e-3, attempt, gap)
    sc = homogeneous_scenario(4, 1, resources, rate, lay, mode, attempt_duration=1e-3,
                              attempt_success_prob=0.05, discrete_step=1e-5)
    return sc.with_qubits(qubits)


def table1_exponential():
    sc = presets.table1()
    return dataclasses.replace(sc, session_types={"S1": SessionLayout("S1", 100, 10, 1e-3)})


def random_shape(rng, n):
    return CoxShape(tuple(rng.uniform(0.2, 3.0, n)), tuple(rng.uniform(0.2, 0.95, n - 1)))


_rng = np.random.default_rng(2024)
PAIRS = [
    ("table1: 4-phase Cox vs exponential attempts", presets.table1(), table1_exponential(), 115.0),
    ("strict_multiple: Cox vs exponential attempts", small("strict_multiple", TABLE_COX),
     small("strict_multiple"), 30.0),
    ("strict_single: Erlang-3 vs exponential gaps", small("strict_single", gap=ERLANG3),
     small("strict_single"), 30.0),
    ("strict_single: hyperexponential vs Cox attempts", small("strict_single", HYPER),
     small("strict_single", TABLE_COX), 30.0),
    ("jump_over: Erlang-3 vs Cox attempts", small("jump_over", ERLANG3, rate=20.0),
     small("jump_over", TABLE_COX, rate=20.0), 30.0),
    ("jump_over: hyperexponential vs exponential gaps", small("jump_over", gap=HYPER, rate=20.0),
     small("jump_over", rate=20.0), 30.0),
    ("strict_multiple: Erlang-3 vs hyperexponential gaps", small("strict_multiple", gap=ERLANG3),
     small("strict_multiple", gap=HYPER), 30.0),
    ("uneven qubits: Cox vs Erlang-3 attempts",
     small("strict_single", TABLE_COX, qubits=(1, 2, 2, 3)), small("strict_single", ERLANG3, qubits=(1, 2, 2, 3)),
     30.0),
    ("jump_over C=3: random 3-phase vs 2-phase shapes",
     small("jump_over", random_shape(_rng, 3), random_shape(_rng, 2), qubits=3, resources=3, rate=30.0),
     small("jump_over", random_shape(_rng, 2), random_shape(_rng, 3), qubits=3, resources=3, rate=30.0), 30.0),
    ("strict_multiple C=1: steep vs exponential attempts and gaps",
     small("strict_multiple", STEEP, STEEP, resources=1, rate=6.0), small("strict_multiple", resources=1, rate=6.0),
     30.0),
]


def test_c3_insensitivity():
    worst_analytic, failures, checks = 0.0, [], 0
    for name, a, b, dur in PAIRS:
        ba, bb = analytic.blocking_probabilities(a), analytic.blocking_probabilities(b)
        worst_analytic = max(worst_analytic, float(np.max(np.abs(ba - bb) / np.maximum(np.abs(ba), 1e-300))))
        est = {}
        for engine in ENGINES:
            sm = simulate(a, engine, dur, 31, 50, WORKERS)
            est[f"{engine.value}(A)"] = (sm.blocking_pooled, sm.blocking_pooled_sem)
        sm = simulate(b, "cox", dur, 37, 50, WORKERS)
        est["cox(B)"] = (sm.blocking_pooled, sm.blocking_pooled_sem)
        for (ka, (x, sx)), (kb, (y, sy)) in itertools.combinations(est.items(), 2):
            checks += 1
            if not within(x, sx, y, sy):
                failures.append(f"{name}: {ka}={x:.4f}+-{sx:.4f} vs {kb}={y:.4f}+-{sy:.4f}")
        print(f"  {name}: analytic {analytic.average_blocking(a):.4f}; "
              + ", ".join(f"{k} {v[0]:.4f}" for k, v in est.items()))
    verdict("C3 insensitivity", worst_analytic <= 1e-12 and not failures,
            f"10 pairs, analytic max relative diff {worst_analytic:.1e}, "
            f"{checks - len(failures)}/{checks} simulated comparisons within 3 SE"
            + ("" if not failures else "; " + "; ".join(failures)))


# --- homogeneous reproduction ------------------------------------------------

C4_RATES = (0.087, 0.3, 0.5, 0.7, 0.986)


def test_c4_strict_single_sweep():
    sc = presets.table1()
    ref = [analytic.blocking_probabilities(sc.with_rates(r)).mean() for r in C4_RATES]
    deltas = {}
    for engine in ENGINES:
        sim = [simulate(sc.with_rates(r), engine, RUN, 7, 50, WORKERS).blocking_avg for r in C4_RATES]
        deltas[engine.value] = compute_error_metric(ref, sim)
    verdict("C4 table-1 strict-single sweep", all(d <= 0.02 for d in deltas.values()),
            "delta " + ", ".join(f"{k} {v:.4f}" for k, v in deltas.items()) + " (limit 0.02)")


def test_c5_jump_over_retrials():
    sc = presets.table1(mode="jump_over")
    worst, ok = 0.0, True
    parts = []
    for rate in (0.5, 0.986):
        for engine in ENGINES:
            sm = simulate(sc.with_rates(rate), engine, 115.0, 11, 50, WORKERS)
            a, b = sm.first_call_blocking, sm.retrial_blocking
            z = abs(a - b) / math.hypot(sm.first_call_sem, sm.retrial_sem)
            ok &= z <= 3.0
            worst = max(worst, z)
            parts.append(f"{engine.value}@{rate:g} {a:.4f}/{b:.4f}")
    verdict("C5 jump-over first call vs retrial", ok, f"max |diff|/SE {worst:.2f}; " + ", ".join(parts))


def test_c6_service_times():
    sc = presets.high_pgen()
    exact_multi = session_mean_duration(sc.session(0), "strict_multiple")
    exact_single = session_mean_duration(sc.session(0), "strict_single")
    ok, parts = True, []
    for engine in ENGINES:
        sm_multi = simulate(sc.with_mode("strict_multiple").with_rates(0.5), engine, 115.0, 5, 50, WORKERS)
        sm_single = simulate(sc.with_mode("strict_single").with_rates(0.5), engine, 115.0, 5, 50, WORKERS)
        ok &= abs(sm_multi.mean_service_time / 0.12407 - 1) <= 0.01
        ok &= abs(sm_single.mean_service_time / 0.0786 - 1) <= 0.02
        ok &= sm_single.blocking_pooled < sm_multi.blocking_pooled
        parts.append(f"{engine.value} {sm_multi.mean_service_time * 1e3:.2f}/{sm_single.mean_service_time * 1e3:.2f} ms, "
                     f"blocking {sm_multi.blocking_pooled:.3f}/{sm_single.blocking_pooled:.3f}")
    for rate in (0.1, 0.5, 1.0, 2.0):
        ok &= (analytic.average_blocking(sc.with_mode("strict_single").with_rates(rate))
               < analytic.average_blocking(sc.with_mode("strict_multiple").with_rates(rate)))
    verdict("C6 service times at p_gen=1e-3", ok,
            f"exact {exact_multi * 1e3:.3f}/{exact_single * 1e3:.3f} ms (multiple/single); " + "; ".join(parts))


def test_c7_mode_comparison():
    base = presets.table1(rate=5.0)
    single = simulate(base, "discrete", RUN, 13, 50, WORKERS)
    jump = simulate(base.with_mode("jump_over"), "discrete", RUN, 13, 50, WORKERS)
    ok = (jump.blocking_pooled < single.blocking_pooled and jump.idle_ratio > single.idle_ratio
          and jump.entanglement_total > single.entanglement_total)
    verdict("C7 jump-over vs strict-single at nu=5", ok,
            f"blocking {jump.blocking_pooled:.4f} < {single.blocking_pooled:.4f}, "
            f"idle {jump.idle_ratio:.4f} > {single.idle_ratio:.4f}, "
            f"entanglement {jump.entanglement_total:.1f} > {single.entanglement_total:.1f}")


def test_c8_qubit_plateau():
    rates = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]
    ok, parts = True, []
    for name, sc, resources in [("K=8", presets.table1(), (1, 2, 3)), ("K=20", presets.homogeneous_20(), (1, 2))]:
        for C in resources:
            h = analytic.heatmap(sc.with_resources(C), range(1, 11), rates)
            rise = bool(np.all(h[1] > h[0]))
            plateau = float(np.abs(h[2:] - h[-1]).max())
            ok &= rise and plateau < 0.01
            parts.append(f"{name} C={C}: c2>c1 {rise}, plateau gap {plateau:.4f}")
    verdict("C8 qubit plateau", ok, "; ".join(parts))


def test_c9_split_link():
    sc = presets.table2()
    rates = (0.087, 0.5, 0.986)
    s1, s2 = sc.flows_in_group("S1"), sc.flows_in_group("S2")
    ok, parts = True, []
    ref = {"S1": [], "S2": []}
    for r in rates:
        res = analytic.analyze(sc.with_rates(r))
        g1, g2 = analytic.mean_blocking_over(res, s1), analytic.mean_blocking_over(res, s2)
        ok &= g2 < res.average < g1
        ref["S1"].append(g1)
        ref["S2"].append(g2)
        parts.append(f"nu={r:g}: S2 {g2:.4f} < avg {res.average:.4f} < S1 {g1:.4f}")
    for engine in ENGINES:
        sims = [simulate(sc.with_rates(r), engine, RUN, 17, 50, WORKERS) for r in rates]
        for g, idx in (("S1", s1), ("S2", s2)):
            d = compute_error_metric(ref[g], [sm.group_blocking(idx)[0] for sm in sims])
            ok &= d <= 0.06
            parts.append(f"{engine.value} delta[{g}] {d:.4f}")
    verdict("C9 split-link ordering", ok, "; ".join(parts))
