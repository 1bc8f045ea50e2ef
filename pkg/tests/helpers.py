"""Scenario builders shared by the tests."""
import dataclasses

import numpy as np

from egsloss.model import (
    PeriodKind,
    PeriodSpec,
    PhaseSpec,
    ScenarioSpec,
    ServiceMode,
    SessionTypeSpec,
    Topology,
    build_flow_set,
)

A, C_, I = PeriodKind.ATTEMPT, PeriodKind.CALIBRATION, PeriodKind.IDLE


def single_phase_session(mean=1.0, exit_prob=0.0, label="s"):
    return SessionTypeSpec(label, (PeriodSpec(A, (PhaseSpec(mean, 0.0, exit_prob),)),))


def one_flow(qubits, resources, rate=1.0, session=None, mode=ServiceMode.STRICT_SINGLE):
    session = session or single_phase_session()
    topo = Topology(2, tuple(qubits), resources)
    flows = build_flow_set(topo, [session.label], rate)
    return ScenarioSpec(topo, tuple(flows), mode, {session.label: session})


def random_period(rng, kind, n_phases):
    phases = []
    for j in range(n_phases):
        nxt = float(rng.uniform(0.1, 0.9)) if j + 1 < n_phases else 0.0
        ext = (1 - nxt) * float(rng.uniform(0, 1)) if kind is A else 0.0
        phases.append(PhaseSpec(float(rng.uniform(0.2, 2.0)), nxt, ext))
    return PeriodSpec(kind, tuple(phases))


def random_tiny_scenario(rng, mode, max_nodes=4, max_resources=3, max_qubits=3):
    """Random instance within K <= 4, C <= 3, c <= 3, <= 3 periods of <= 2 phases."""
    mode = ServiceMode(mode)
    K = int(rng.integers(2, max_nodes + 1))
    C = int(rng.integers(1, max_resources + 1))
    q = tuple(int(c) for c in rng.integers(1, max_qubits + 1, size=K))
    gap = I if mode is ServiceMode.JUMP_OVER else C_
    n_per = int(rng.integers(1, 4))
    kinds = {1: [A], 2: [A, A], 3: [A, gap, A]}[n_per]
    if mode is ServiceMode.JUMP_OVER and n_per < 3 and rng.random() < 0.7:
        kinds = [A, I, A]
    session = SessionTypeSpec("s", tuple(random_period(rng, k, int(rng.integers(1, 3))) for k in kinds))
    topo = Topology(K, q, C)
    flows = [dataclasses.replace(f, arrival_rate=float(rng.choice([0.0, rng.uniform(0.2, 2.0)], p=[0.1, 0.9])))
             for f in build_flow_set(topo, ["s"], 0.0)]
    if all(f.arrival_rate == 0 for f in flows):
        flows[0] = dataclasses.replace(flows[0], arrival_rate=1.0)
    return ScenarioSpec(topo, tuple(flows), mode, {"s": session})

