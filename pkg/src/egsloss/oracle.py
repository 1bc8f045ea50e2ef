"""Brute-force phase-level CTMC for tiny scenarios.

The chain is built by breadth-first search from the empty state.  A state is
the occupancy vector over every (flow, period, phase) triple in lexicographic
order.  Nothing here relies on the product form, so the module serves as
ground truth for :mod:`egsloss.analytic`.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from egsloss.model import (
    PeriodKind,
    ScenarioError,
    ScenarioSpec,
    ServiceMode,
    collapse_to_exponential,
)

DEFAULT_STATE_CAP = 200_000
DEFAULT_PHASE_CAP = 256  # total phases over all flows (the length of a state vector)
DENSE_LIMIT = 5_000

# transition tags, used to measure blocking as a ratio of fluxes
TAG_NONE = 0
TAG_FIRST_OK = 1
TAG_FIRST_BLOCKED = 2
TAG_RETRY_OK = 3
TAG_RETRY_BLOCKED = 4


class StateSpaceTooLarge(ScenarioError):
    pass


@dataclass(frozen=True)
class _FlowLayout:
    nodes: tuple[int, int]
    rate: float
    offset: int  # first global phase index of this flow
    period_of: tuple[int, ...]  # period index of each local phase
    period_start: tuple[int, ...]  # local index of the first phase of each period
    holds: tuple[bool, ...]  # per period
    kinds: tuple[PeriodKind, ...]
    mu: tuple[float, ...]
    nxt: tuple[float, ...]
    ext: tuple[float, ...]

    @property
    def n_phases(self) -> int:
        return len(self.mu)

    def next_idle_after(self, period: int) -> int | None:
        for k in range(period + 1, len(self.kinds)):
            if self.kinds[k] is PeriodKind.IDLE:
                return k
        return None


@dataclass
class GeneratorMatrix:
    """Off-diagonal transition list of the chain plus bookkeeping for checks.

    ``tags`` marks admissions, blocked arrivals and jump-over re-acquisitions;
    ``src_phase`` / ``dst_phase`` give the global phase a transition removes
    a session from and adds one to (-1 for outside).
    """

    scenario: ScenarioSpec
    states: list[tuple[int, ...]]
    rows: np.ndarray
    cols: np.ndarray
    rates: np.ndarray
    tags: np.ndarray
    flow_of: np.ndarray
    src_phase: np.ndarray
    dst_phase: np.ndarray
    layouts: tuple[_FlowLayout, ...]

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self) -> dict[tuple[int, ...], int]:
        return {s: k for k, s in enumerate(self.states)}

    def matrix(self) -> sp.csr_matrix:
        """Sparse generator with diagonal equal to minus the row sums."""
        n = self.size
        off = (self.rows != self.cols)  # self-loops only arise from no-op routings
        q = sp.coo_matrix((self.rates[off], (self.rows[off], self.cols[off])), shape=(n, n)).tocsr()
        out = np.asarray(q.sum(axis=1)).ravel()
        return (q - sp.diags(out)).tocsr()

    def phase_array(self) -> np.ndarray:
        return np.array(self.states, dtype=np.int64).reshape(self.size, -1)


def _layouts(scenario: ScenarioSpec) -> tuple[_FlowLayout, ...]:
    out, offset = [], 0
    for i, f in enumerate(scenario.flows):
        sess = scenario.session(i)
        period_of, period_start, mu, nxt, ext = [], [], [], [], []
        for k, period in enumerate(sess.periods):
            period_start.append(len(mu))
            for j, ph in enumerate(period.phases):
                period_of.append(k)
                mu.append(1.0 / ph.mean_duration)
                nxt.append(ph.next_phase_prob if j + 1 < len(period.phases) else 0.0)
                ext.append(ph.exit_prob)
        out.append(_FlowLayout(
            f.nodes, f.arrival_rate, offset, tuple(period_of), tuple(period_start),
            tuple(p.holds_resource for p in sess.periods), tuple(p.kind for p in sess.periods),
            tuple(mu), tuple(nxt), tuple(ext)))
        offset += len(mu)
    return tuple(out)


class _Builder:
    def __init__(self, scenario: ScenarioSpec, cap: int):
        self.sc = scenario
        self.cap = cap
        self.lay = _layouts(scenario)
        self.qcap = scenario.topology.qubits_per_node
        self.C = scenario.topology.resource_count
        self.jump = scenario.service_mode is ServiceMode.JUMP_OVER
        self.single = scenario.service_mode is ServiceMode.STRICT_SINGLE
        self.L = sum(l.n_phases for l in self.lay)
        # resource-holding global phases
        self.res_mask = np.zeros(self.L, dtype=bool)
        for l in self.lay:
            for j in range(l.n_phases):
                self.res_mask[l.offset + j] = l.holds[l.period_of[j]]

    def loads(self, x):
        nodes = [0] * len(self.qcap)
        busy = 0
        for l in self.lay:
            n = sum(x[l.offset:l.offset + l.n_phases])
            nodes[l.nodes[0]] += n
            nodes[l.nodes[1]] += n
        for g in range(self.L):
            if self.res_mask[g]:
                busy += x[g]
        return nodes, busy

    def enter_period(self, l: _FlowLayout, period: int, busy_after_leave: int):
        """Destination global phase (or -1 to leave) and a tag for entering ``period``."""
        if period >= len(l.kinds):
            return -1, TAG_NONE
        if self.jump and l.holds[period] and not l.holds[period - 1]:
            if busy_after_leave < self.C:
                return l.offset + l.period_start[period], TAG_RETRY_OK
            idle = l.next_idle_after(period)
            if idle is None:
                return -1, TAG_RETRY_BLOCKED
            return l.offset + l.period_start[idle], TAG_RETRY_BLOCKED
        return l.offset + l.period_start[period], TAG_NONE

    def transitions(self, x):
        nodes, busy = self.loads(x)
        for fi, l in enumerate(self.lay):
            u, v = l.nodes
            if l.rate > 0 and nodes[u] < self.qcap[u] and nodes[v] < self.qcap[v]:
                if busy < self.C:
                    yield fi, l.rate, -1, l.offset, TAG_FIRST_OK
                else:
                    dst = -1
                    if self.jump:
                        idle = l.next_idle_after(0)
                        if idle is not None:
                            dst = l.offset + l.period_start[idle]
                    yield fi, l.rate, -1, dst, TAG_FIRST_BLOCKED
            for j in range(l.n_phases):
                g = l.offset + j
                if not x[g]:
                    continue
                total = x[g] * l.mu[j]
                k = l.period_of[j]
                p_next, p_exit = l.nxt[j], l.ext[j]
                if p_next > 0:
                    yield fi, total * p_next, g, g + 1, TAG_NONE
                rest = 1.0 - p_next
                if self.single and p_exit > 0:
                    yield fi, total * p_exit, g, -1, TAG_NONE
                    rest -= p_exit
                if rest > 1e-15:
                    after = busy - (1 if l.holds[k] else 0)
                    dst, tag = self.enter_period(l, k + 1, after)
                    yield fi, total * rest, g, dst, tag

    def build(self) -> GeneratorMatrix:
        start = (0,) * self.L
        index = {start: 0}
        states = [start]
        rows, cols, rates, tags, flows, srcs, dsts = [], [], [], [], [], [], []
        queue = deque([start])
        while queue:
            x = queue.popleft()
            a = index[x]
            for fi, rate, src, dst, tag in self.transitions(x):
                if rate <= 0:
                    continue
                if src < 0 and dst < 0:
                    y = x  # blocked arrival lost: flux recorded as a self-loop
                else:
                    y = list(x)
                    if src >= 0:
                        y[src] -= 1
                    if dst >= 0:
                        y[dst] += 1
                    y = tuple(y)
                b = index.get(y)
                if b is None:
                    if len(states) >= self.cap:
                        raise StateSpaceTooLarge(f"state space exceeds the cap of {self.cap} states")
                    b = index[y] = len(states)
                    states.append(y)
                    queue.append(y)
                rows.append(a)
                cols.append(b)
                rates.append(rate)
                tags.append(tag)
                flows.append(fi)
                srcs.append(src)
                dsts.append(dst)
        return GeneratorMatrix(
            self.sc, states, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(rates, dtype=float), np.array(tags, dtype=np.int8), np.array(flows, dtype=np.int64),
            np.array(srcs, dtype=np.int64), np.array(dsts, dtype=np.int64), self.lay)


def build_ctmc(scenario: ScenarioSpec, state_cap: int = DEFAULT_STATE_CAP,
               phase_cap: int = DEFAULT_PHASE_CAP) -> GeneratorMatrix:
    phases = sum(scenario.session(i).phase_count for i in range(scenario.flow_count))
    if phases > phase_cap:
        raise StateSpaceTooLarge(f"{phases} phases in total exceed the oracle's limit of {phase_cap}")
    return _Builder(scenario, state_cap).build()


def stationary_distribution(gen: GeneratorMatrix) -> np.ndarray:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1`` by replacing one balance equation."""
    n = gen.size
    if n == 1:
        return np.ones(1)
    a = gen.matrix().T.tolil()
    a[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        if n <= DENSE_LIMIT:
            pi = np.linalg.solve(a.toarray(), b)
        else:
            pi = spla.spsolve(a.tocsc(), b)
    except np.linalg.LinAlgError as exc:
        raise ScenarioError("singular generator: the chain is not irreducible") from exc
    if not np.all(np.isfinite(pi)):
        raise ScenarioError("singular generator: the chain is not irreducible")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _flow_counts(gen: GeneratorMatrix) -> np.ndarray:
    x = gen.phase_array()
    return np.stack([x[:, l.offset:l.offset + l.n_phases].sum(axis=1) for l in gen.layouts], axis=1) \
        if gen.layouts else np.zeros((gen.size, 0), dtype=np.int64)


def _node_loads(gen: GeneratorMatrix) -> np.ndarray:
    counts = _flow_counts(gen)
    loads = np.zeros((gen.size, gen.scenario.topology.node_count), dtype=np.int64)
    for fi, l in enumerate(gen.layouts):
        loads[:, l.nodes[0]] += counts[:, fi]
        loads[:, l.nodes[1]] += counts[:, fi]
    return loads


def busy_resources(gen: GeneratorMatrix) -> np.ndarray:
    x = gen.phase_array()
    mask = np.zeros(x.shape[1], dtype=bool)
    for l in gen.layouts:
        for j in range(l.n_phases):
            mask[l.offset + j] = l.holds[l.period_of[j]]
    return x[:, mask].sum(axis=1)


def oracle_blocking(gen: GeneratorMatrix, pi: np.ndarray, flow: int) -> float:
    """P(all resources busy | both nodes of ``flow`` have a free qubit), summed over states."""
    if not 0 <= flow < len(gen.layouts):
        raise IndexError(f"flow index {flow} out of range")
    u, v = gen.layouts[flow].nodes
    caps = gen.scenario.topology.qubits_per_node
    loads = _node_loads(gen)
    cond = (loads[:, u] < caps[u]) & (loads[:, v] < caps[v])
    den = pi[cond].sum()
    if den <= 0:
        raise ScenarioError(f"flow {flow} never finds free qubits")
    full = busy_resources(gen) == gen.scenario.topology.resource_count
    return float(pi[cond & full].sum() / den)


def _flux_ratio(gen, pi, flow, ok_tag, blocked_tag) -> float:
    sel = gen.flow_of == flow
    flux = pi[gen.rows] * gen.rates
    blocked = flux[sel & (gen.tags == blocked_tag)].sum()
    total = blocked + flux[sel & (gen.tags == ok_tag)].sum()
    if total <= 0:
        return math.nan
    return float(blocked / total)


def first_call_blocking(gen: GeneratorMatrix, pi: np.ndarray, flow: int) -> float:
    """Fraction of issued first calls of ``flow`` that are blocked, from transition fluxes."""
    return _flux_ratio(gen, pi, flow, TAG_FIRST_OK, TAG_FIRST_BLOCKED)


def retrial_blocking(gen: GeneratorMatrix, pi: np.ndarray, flow: int) -> float:
    """Fraction of post-idle re-acquisitions of ``flow`` that are blocked (nan if none occur)."""
    return _flux_ratio(gen, pi, flow, TAG_RETRY_OK, TAG_RETRY_BLOCKED)


def product_form(gen: GeneratorMatrix) -> np.ndarray:
    """Normalized ``prod rho_g^x_g / x_g!`` over the chain's states."""
    from egsloss.analytic import scenario_traffic

    log_rho = np.concatenate([
        np.log(np.where(tr.per_phase_intensity > 0, tr.per_phase_intensity, 1.0))
        for tr in scenario_traffic(gen.scenario)]) if gen.layouts else np.zeros(0)
    zero = np.concatenate([tr.per_phase_intensity <= 0 for tr in scenario_traffic(gen.scenario)]) \
        if gen.layouts else np.zeros(0, dtype=bool)
    x = gen.phase_array()
    logw = x @ log_rho - np.vectorize(math.lgamma)(x + 1.0).sum(axis=1)
    w = np.exp(logw - logw.max())
    w[(x[:, zero] > 0).any(axis=1)] = 0.0
    return w / w.sum()


def balance_residual(gen: GeneratorMatrix, pi: np.ndarray) -> float:
    """Max ``|(pi Q)_x|``: how far ``pi`` is from satisfying global balance."""
    return float(np.abs(gen.matrix().T @ pi).max())


def local_balance_residual(gen: GeneratorMatrix, pi: np.ndarray) -> float:
    """Max violation of phase-wise balance.

    For every state ``x`` and phase ``g`` occupied in ``x``, the probability
    flux out of ``x`` through completions of ``g`` must equal the flux into
    ``x`` carried by sessions entering ``g``.
    """
    flux = pi[gen.rows] * gen.rates
    n, L = gen.size, int(gen.dst_phase.max(initial=-1) + 1)
    L = max(L, gen.phase_array().shape[1])
    out = np.zeros((n, L))
    inn = np.zeros((n, L))
    moved = gen.rows != gen.cols
    m = moved & (gen.src_phase >= 0)
    np.add.at(out, (gen.rows[m], gen.src_phase[m]), flux[m])
    m = moved & (gen.dst_phase >= 0)
    np.add.at(inn, (gen.cols[m], gen.dst_phase[m]), flux[m])
    return float(np.abs(out - inn).max(initial=0.0))


def collapsed_scenario(scenario: ScenarioSpec) -> ScenarioSpec:
    """Scenario whose sessions keep period means and exit probabilities but use one phase per period."""
    import dataclasses

    types, flows = {}, []
    for i, f in enumerate(scenario.flows):
        label = f"{f.session_type}#{i}"
        types[label] = collapse_to_exponential(scenario.session(i))
        flows.append(dataclasses.replace(f, session_type=label))
    return dataclasses.replace(scenario, flows=tuple(flows), session_types=types)


def period_distribution(gen: GeneratorMatrix, pi: np.ndarray) -> dict[tuple[int, ...], float]:
    """Stationary law of the per-period session counts (phases of a period summed)."""
    x = gen.phase_array()
    cols = []
    for l in gen.layouts:
        for k in range(len(l.kinds)):
            idx = [l.offset + j for j in range(l.n_phases) if l.period_of[j] == k]
            cols.append(x[:, idx].sum(axis=1))
    agg = np.stack(cols, axis=1) if cols else np.zeros((gen.size, 0), dtype=np.int64)
    out: dict[tuple[int, ...], float] = {}
    for row, p in zip(map(tuple, agg), pi):
        out[row] = out.get(row, 0.0) + float(p)
    return out


def aggregation_gap(scenario: ScenarioSpec, state_cap: int = DEFAULT_STATE_CAP) -> float:
    """Max difference between the period-level law of the phase chain and of the collapsed chain."""
    g1 = build_ctmc(scenario, state_cap)
    d1 = period_distribution(g1, stationary_distribution(g1))
    g2 = build_ctmc(collapsed_scenario(scenario), state_cap)
    d2 = period_distribution(g2, stationary_distribution(g2))
    keys = set(d1) | set(d2)
    return max(abs(d1.get(k, 0.0) - d2.get(k, 0.0)) for k in keys)


@dataclass(frozen=True)
class OracleResult:
    flow_blocking: np.ndarray
    first_call_blocking: np.ndarray
    retrial_blocking: np.ndarray
    state_count: int


def solve(scenario: ScenarioSpec, state_cap: int = DEFAULT_STATE_CAP) -> OracleResult:
    gen = build_ctmc(scenario, state_cap)
    pi = stationary_distribution(gen)
    F = scenario.flow_count
    return OracleResult(
        np.array([oracle_blocking(gen, pi, i) for i in range(F)]),
        np.array([first_call_blocking(gen, pi, i) for i in range(F)]),
        np.array([retrial_blocking(gen, pi, i) for i in range(F)]),
        gen.size)


def dump(gen: GeneratorMatrix, pi: np.ndarray, path) -> None:
    """Write the state list and stationary vector as JSON for debugging."""
    data = {
        "service_mode": gen.scenario.service_mode.value,
        "phases_per_flow": [l.n_phases for l in gen.layouts],
        "states": [{"x": list(s), "pi": float(p)} for s, p in zip(gen.states, pi)],
    }
    Path(path).write_text(json.dumps(data, indent=1))
