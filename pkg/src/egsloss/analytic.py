"""Closed-form blocking probabilities of the EGS loss model.

Every state of the phase-level Markov chain has a product-form probability,
and summing over the phases of each flow collapses it to a function of the
per-flow session counts only.  For the strict modes a flow is one class with
traffic intensity ``rho = nu * E[session duration]``.  Under jump-over the
switch counts only sessions inside resource-holding periods, so each flow
splits into an *active* class (holds a resource and two qubits) and an
*idle* class (holds only the qubits).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from egsloss import kernels
from egsloss.model import (
    PeriodSpec,
    ScenarioError,
    ScenarioSpec,
    ServiceMode,
    SessionTypeSpec,
    period_entry_probabilities,
    period_exit_prob,
    session_mean_duration,
)


@dataclass(frozen=True)
class FlowTraffic:
    per_phase_intensity: np.ndarray
    reach_probs: np.ndarray
    active_intensity: float
    idle_intensity: float

    @property
    def total_intensity(self) -> float:
        return self.active_intensity + self.idle_intensity


@dataclass(frozen=True)
class BlockingResult:
    """Per-flow blocking and the quantities the weighted average needs."""

    flow_blocking: np.ndarray
    qubit_availability: np.ndarray  # P(Q'(f)): both nodes of f have a free qubit
    resource_load: np.ndarray  # distribution of busy resources, index 0..C
    rates: np.ndarray

    @property
    def average(self) -> float:
        w = self.qubit_availability * self.rates
        if w.sum() <= 0:
            raise ValueError("average blocking needs at least one flow with a positive rate")
        return float(w @ self.flow_blocking / w.sum())

    @property
    def idle_probability(self) -> float:
        """Stationary probability that at least one resource is free."""
        return float(1.0 - self.resource_load[-1])


def attempt_period_exit_prob(period: PeriodSpec) -> float:
    """Probability of leaving a period on success, given the period was entered."""
    return period_exit_prob(period)


@lru_cache(maxsize=256)
def _reach_profile(session: SessionTypeSpec, mode: ServiceMode):
    entry = period_entry_probabilities(session, mode)
    reach, means, holds = [], [], []
    for e, period in zip(entry, session.periods):
        reach.append(e * period.reach_probabilities())
        means.append([ph.mean_duration for ph in period.phases])
        holds.append(np.full(len(period.phases), period.holds_resource))
    return np.concatenate(reach), np.concatenate(means), np.concatenate(holds)


def reach_probabilities(session: SessionTypeSpec, mode: ServiceMode) -> np.ndarray:
    """Reach probability of every phase, in (period, phase) order.

    Jump-over sessions treat each period entry as certain: blocked
    re-acquisitions are handled by truncating the state space, not by
    thinning the routing.
    """
    return _reach_profile(session, ServiceMode(mode))[0].copy()


def phase_reach_probability(session: SessionTypeSpec, mode: ServiceMode, period: int, phase: int) -> float:
    if not 0 <= period < len(session.periods):
        raise IndexError(f"period index {period} out of range")
    if not 0 <= phase < len(session.periods[period].phases):
        raise IndexError(f"phase index {phase} out of range")
    offset = sum(len(p.phases) for p in session.periods[:period])
    return float(_reach_profile(session, ServiceMode(mode))[0][offset + phase])


def flow_traffic(rate: float, session: SessionTypeSpec, mode: ServiceMode) -> FlowTraffic:
    mode = ServiceMode(mode)
    reach, means, holds = _reach_profile(session, mode)
    rho = rate * reach * means
    return FlowTraffic(rho, reach.copy(), float(rho[holds].sum()), float(rho[~holds].sum()))


def scenario_traffic(scenario: ScenarioSpec) -> list[FlowTraffic]:
    return [flow_traffic(f.arrival_rate, scenario.session(i), scenario.service_mode)
            for i, f in enumerate(scenario.flows)]


def _flow_nodes(scenario: ScenarioSpec):
    u = np.array([f.nodes[0] for f in scenario.flows], dtype=np.int64)
    v = np.array([f.nodes[1] for f in scenario.flows], dtype=np.int64)
    return u, v


def _classes(scenario: ScenarioSpec, traffic: list[FlowTraffic]):
    """Class arrays for the kernel; zero-intensity classes are dropped (0^0 = 1)."""
    cu, cv, cres, clog = [], [], [], []
    for f, tr in zip(scenario.flows, traffic):
        for rho, holds in ((tr.active_intensity, 1), (tr.idle_intensity, 0)):
            if rho > 0:
                cu.append(f.nodes[0])
                cv.append(f.nodes[1])
                cres.append(holds)
                clog.append(math.log(rho))
    return (np.array(cu, dtype=np.int64), np.array(cv, dtype=np.int64),
            np.array(cres, dtype=np.int64), np.array(clog, dtype=float))


def analyze(scenario: ScenarioSpec, traffic: list[FlowTraffic] | None = None) -> BlockingResult:
    """Blocking probability of every flow in one pass over the aggregated state space."""
    if traffic is None:
        traffic = scenario_traffic(scenario)
    for tr in traffic:
        if not (math.isfinite(tr.active_intensity) and math.isfinite(tr.idle_intensity)):
            raise ScenarioError("traffic intensities must be finite")
    topo = scenario.topology
    fu, fv = _flow_nodes(scenario)
    cu, cv, cres, clog = _classes(scenario, traffic)
    den, num, by_load, _ = kernels.accumulate_blocking(
        cu, cv, cres, clog, fu, fv, np.array(topo.qubits_per_node, dtype=np.int64), topo.resource_count)
    den = np.asarray(den, dtype=float)
    num = np.asarray(num, dtype=float)
    by_load = np.asarray(by_load, dtype=float)
    if np.any(den <= 0):
        bad = int(np.argmin(den))
        raise ScenarioError(f"flow {bad} can never issue a request (empty conditioning set)")
    total = by_load.sum()
    return BlockingResult(num / den, den / total, by_load / total, scenario.rates())


def blocking_probability(scenario: ScenarioSpec, flow: int) -> float:
    if not 0 <= flow < scenario.flow_count:
        raise IndexError(f"flow index {flow} out of range")
    return float(analyze(scenario).flow_blocking[flow])


def blocking_probabilities(scenario: ScenarioSpec) -> np.ndarray:
    return analyze(scenario).flow_blocking


def average_blocking(scenario: ScenarioSpec) -> float:
    return analyze(scenario).average


def mean_blocking_over(result: BlockingResult, flows) -> float:
    return float(np.mean(result.flow_blocking[list(flows)]))


def erlang_b(servers: int, rho: float) -> float:
    """Erlang loss formula via the stable recurrence ``B_n = rho B_{n-1} / (n + rho B_{n-1})``."""
    if servers < 0 or rho < 0:
        raise ValueError("servers and rho must be non-negative")
    b = 1.0
    for n in range(1, servers + 1):
        b = rho * b / (n + rho * b)
    return b


def q_weight(q, intensities) -> float:
    """``prod rho_j^q_j / q_j!`` evaluated in log space, with ``0^0 = 1``."""
    if len(q) != len(intensities):
        raise ValueError("q and intensities must have equal length")
    logw = 0.0
    for n, rho in zip(q, intensities):
        if n == 0:
            continue
        if rho <= 0:
            return 0.0
        logw += n * math.log(rho) - math.lgamma(n + 1)
    return math.exp(logw)


def _q_vectors(scenario: ScenarioSpec, limit_total: int, strict_nodes: tuple[int, ...] = ()):
    """Qubit-feasible session-count vectors with total <= ``limit_total``."""
    caps = list(scenario.topology.qubits_per_node)
    for n in strict_nodes:
        caps[n] -= 1
    flows = [f.nodes for f in scenario.flows]
    F = len(flows)
    load = [0] * len(caps)
    q = [0] * F
    out = []

    def rec(k, remaining):
        if k == F:
            out.append(tuple(q))
            return
        u, v = flows[k]
        n = 0
        while True:
            rec(k + 1, remaining - n)
            if n == remaining or load[u] >= caps[u] or load[v] >= caps[v]:
                break
            n += 1
            q[k] = n
            load[u] += 1
            load[v] += 1
        load[u] -= n
        load[v] -= n
        q[k] = 0

    if min(caps) >= 0:
        rec(0, limit_total)
    return out


def enumerate_Q(scenario: ScenarioSpec, h: int) -> set[tuple[int, ...]]:
    """Session-count vectors with exactly ``h`` sessions that respect every qubit limit."""
    if not 0 <= h <= scenario.topology.resource_count:
        raise ValueError("h must lie in [0, C]")
    return {q for q in _q_vectors(scenario, h) if sum(q) == h}


def enumerate_Q_prime(scenario: ScenarioSpec, flow: int) -> set[tuple[int, ...]]:
    """Vectors (total <= C) that leave a free qubit at both nodes of ``flow``."""
    if not 0 <= flow < scenario.flow_count:
        raise IndexError(f"flow index {flow} out of range")
    return set(_q_vectors(scenario, scenario.topology.resource_count, scenario.flows[flow].nodes))


def heatmap(scenario: ScenarioSpec, qubits, rates) -> np.ndarray:
    """Average blocking over a (qubits per node) x (per-flow rate) grid."""
    out = np.empty((len(qubits), len(rates)))
    for a, c in enumerate(qubits):
        base = scenario.with_qubits(int(c))
        for b, r in enumerate(rates):
            out[a, b] = average_blocking(base.with_rates(float(r)))
    return out


def ergodic_sessions(scenario: ScenarioSpec) -> np.ndarray:
    """Mean session duration per flow (the rho / nu ratio)."""
    return np.array([session_mean_duration(scenario.session(i), scenario.service_mode)
                     for i in range(scenario.flow_count)])


__all__ = [
    "FlowTraffic", "BlockingResult", "attempt_period_exit_prob", "reach_probabilities",
    "phase_reach_probability", "flow_traffic", "scenario_traffic", "analyze",
    "blocking_probability", "blocking_probabilities", "average_blocking", "erlang_b",
    "q_weight", "enumerate_Q", "enumerate_Q_prime", "heatmap",
]
