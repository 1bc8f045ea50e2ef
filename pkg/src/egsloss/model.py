"""Domain types for an entanglement generation switch (EGS) loss model.

A scenario is a star topology of ``K`` nodes around a switch with ``C``
shareable resources.  Every unordered node pair and session type forms a
*flow* that issues session requests as a Poisson process.  A session is an
ordered list of periods (attempt, calibration or idle), each decomposed into
exponential phases so that period durations are Coxian.

Times are seconds throughout.  Node indices are zero-based.
"""
from __future__ import annotations

import dataclasses
import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np


class ScenarioError(ValueError):
    """Raised for scenarios or session layouts that violate model constraints."""


class ServiceMode(str, Enum):
    STRICT_SINGLE = "strict_single"
    STRICT_MULTIPLE = "strict_multiple"
    JUMP_OVER = "jump_over"

    @property
    def is_strict(self) -> bool:
        return self is not ServiceMode.JUMP_OVER


class PeriodKind(str, Enum):
    ATTEMPT = "attempt"
    CALIBRATION = "calibration"
    IDLE = "idle"


_TIME_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*(us|µs|μs|ms|s)?\s*$")
_TIME_SCALE = {None: 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6}


def parse_time(value: Union[float, int, str]) -> float:
    """Convert ``"115.072us"``, ``"1 ms"`` or a bare number of seconds to seconds."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _TIME_RE.match(value)
    if not m:
        raise ScenarioError(f"cannot parse time value {value!r}")
    return float(m.group(1)) * _TIME_SCALE[m.group(2)]


@dataclass(frozen=True)
class PhaseSpec:
    """One exponential phase.

    ``next_phase_prob`` moves to the following phase of the same period,
    ``exit_prob`` is the probability that the period ends with an
    entanglement success after this phase.  The remaining mass ends the
    period without success.
    """

    mean_duration: float
    next_phase_prob: float = 0.0
    exit_prob: float = 0.0

    def __post_init__(self):
        if not self.mean_duration > 0:
            raise ScenarioError(f"phase mean must be positive, got {self.mean_duration}")
        for name in ("next_phase_prob", "exit_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1], got {p}")
        if self.next_phase_prob + self.exit_prob > 1.0 + 1e-12:
            raise ScenarioError("next_phase_prob + exit_prob exceeds 1")


@dataclass(frozen=True)
class PeriodSpec:
    kind: PeriodKind
    phases: tuple[PhaseSpec, ...]
    # fixed duration used by the discrete-time engine; defaults to the mean
    nominal_duration: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PeriodKind(self.kind))
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ScenarioError("a period needs at least one phase")
        if self.kind is not PeriodKind.ATTEMPT and any(ph.exit_prob > 0 for ph in self.phases):
            raise ScenarioError(f"{self.kind.value} phases cannot carry an exit probability")

    @property
    def holds_resource(self) -> bool:
        return self.kind is not PeriodKind.IDLE

    def reach_probabilities(self) -> np.ndarray:
        """Probability of visiting each phase, starting from the first one."""
        r = np.ones(len(self.phases))
        for i in range(1, len(self.phases)):
            r[i] = r[i - 1] * self.phases[i - 1].next_phase_prob
        return r

    @property
    def fixed_duration(self) -> float:
        if self.nominal_duration is not None:
            return self.nominal_duration
        return period_mean_duration(self)


@dataclass(frozen=True)
class SessionTypeSpec:
    """Explicit phase-level session layout."""

    label: str
    periods: tuple[PeriodSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        if not self.periods:
            raise ScenarioError("a session needs at least one period")
        for end in (self.periods[0], self.periods[-1]):
            if end.kind is not PeriodKind.ATTEMPT:
                raise ScenarioError("sessions must begin and end with an attempt period")

    @property
    def phase_count(self) -> int:
        return sum(len(p.phases) for p in self.periods)

    def validate_for(self, mode: ServiceMode) -> None:
        mode = ServiceMode(mode)
        kinds = {p.kind for p in self.periods}
        if mode is ServiceMode.JUMP_OVER and PeriodKind.CALIBRATION in kinds:
            raise ScenarioError(f"session {self.label!r}: calibration periods are not allowed in jump-over mode")
        if mode.is_strict and PeriodKind.IDLE in kinds:
            raise ScenarioError(f"session {self.label!r}: idle periods require jump-over mode")


@dataclass(frozen=True)
class CoxShape:
    """Coxian decomposition of one period, in units of the period's target mean.

    ``next_probs[i]`` is the probability of continuing from phase ``i`` to
    ``i + 1``.  A value given for the last phase is kept for reference but has
    no next phase to lead to and is ignored.  With ``normalize`` the phase
    means are rescaled so the period mean hits the target exactly.
    """

    relative_means: tuple[float, ...] = (1.0,)
    next_probs: tuple[float, ...] = ()
    normalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "relative_means", tuple(float(m) for m in self.relative_means))
        object.__setattr__(self, "next_probs", tuple(float(p) for p in self.next_probs))
        n = len(self.relative_means)
        if n == 0:
            raise ScenarioError("a Cox shape needs at least one phase")
        if len(self.next_probs) not in (n - 1, n):
            raise ScenarioError("next_probs must have one entry per phase (the last may be omitted)")

    def effective_next(self) -> tuple[float, ...]:
        n = len(self.relative_means)
        return tuple(self.next_probs[: n - 1]) + (0.0,)

    def mean_factor(self) -> float:
        """Unnormalized period mean divided by the target mean."""
        r, total = 1.0, 0.0
        for m, p in zip(self.relative_means, self.effective_next()):
            total += r * m
            r *= p
        return total

    def phases(self, target_mean: float, success_prob: float = 0.0) -> tuple[PhaseSpec, ...]:
        scale = target_mean / self.mean_factor() if self.normalize else target_mean
        out = []
        for m, p in zip(self.relative_means, self.effective_next()):
            # the period ends after this phase with prob 1 - p; it ends in success w.p. success_prob
            out.append(PhaseSpec(m * scale, p, (1.0 - p) * success_prob))
        return tuple(out)


EXPONENTIAL = CoxShape()
# attempt-level Cox parameters of the homogeneous experiments
TABLE_COX = CoxShape((5.0 / 12.0, 0.521, 0.651, 0.814), (0.6, 0.48, 0.384, 0.307))


@dataclass(frozen=True)
class SessionLayout:
    """Compact session descriptor: ``batch_count`` batches of attempts separated by gaps.

    Gaps become calibration periods (resource retained) under the strict
    modes and idle periods (resource released) under jump-over.
    """

    label: str
    attempts_per_batch: int
    batch_count: int
    gap_duration: float
    attempt_shape: CoxShape = EXPONENTIAL
    gap_shape: CoxShape = EXPONENTIAL

    def __post_init__(self):
        if self.attempts_per_batch < 1 or self.batch_count < 1:
            raise ScenarioError("attempts_per_batch and batch_count must be >= 1")
        if self.batch_count > 1 and not self.gap_duration > 0:
            raise ScenarioError("gap_duration must be positive")

    def build(self, mode: ServiceMode, attempt_duration: float, p_gen: float) -> SessionTypeSpec:
        mode = ServiceMode(mode)
        attempt = PeriodSpec(PeriodKind.ATTEMPT, self.attempt_shape.phases(attempt_duration, p_gen), attempt_duration)
        gap_kind = PeriodKind.IDLE if mode is ServiceMode.JUMP_OVER else PeriodKind.CALIBRATION
        gap = PeriodSpec(gap_kind, self.gap_shape.phases(self.gap_duration), self.gap_duration)
        periods: list[PeriodSpec] = []
        for b in range(self.batch_count):
            if b:
                periods.append(gap)
            periods.extend([attempt] * self.attempts_per_batch)
        return SessionTypeSpec(self.label, tuple(periods))


SessionSource = Union[SessionTypeSpec, SessionLayout]


@dataclass(frozen=True)
class Topology:
    node_count: int
    qubits_per_node: tuple[int, ...]
    resource_count: int

    def __post_init__(self):
        q = self.qubits_per_node
        if isinstance(q, int):
            q = (q,) * self.node_count
        object.__setattr__(self, "qubits_per_node", tuple(int(c) for c in q))
        if self.node_count < 2:
            raise ScenarioError("need at least two nodes")
        if len(self.qubits_per_node) != self.node_count:
            raise ScenarioError("qubits_per_node must have one entry per node")
        if min(self.qubits_per_node) < 1:
            raise ScenarioError("every node needs at least one communication qubit")
        if self.resource_count < 1:
            raise ScenarioError("need at least one switch resource")

    @classmethod
    def uniform(cls, node_count: int, qubits: int, resources: int) -> "Topology":
        return cls(node_count, (qubits,) * node_count, resources)


@dataclass(frozen=True)
class FlowSpec:
    nodes: tuple[int, int]
    session_type: str
    arrival_rate: float
    attempt_success_prob: float | None = None
    attempt_duration: float | None = None
    group: str | None = None

    def __post_init__(self):
        i, j = (int(n) for n in self.nodes)
        if i == j:
            raise ScenarioError("a flow needs two distinct nodes")
        object.__setattr__(self, "nodes", (min(i, j), max(i, j)))
        if self.arrival_rate < 0:
            raise ScenarioError("arrival_rate must be non-negative")
        p = self.attempt_success_prob
        if p is not None and not 0.0 <= p <= 1.0:
            raise ScenarioError("attempt_success_prob must lie in [0, 1]")
        if self.attempt_duration is not None and not self.attempt_duration > 0:
            raise ScenarioError("attempt_duration must be positive")


RateTable = Union[float, Mapping[tuple, float], Iterable[tuple]]


def build_flow_set(topology: Topology, session_types: Sequence[str], rates: RateTable = 0.0) -> list[FlowSpec]:
    """All ``C(K, 2) * T`` flows in lexicographic ``(i, j, t)`` order.

    ``rates`` is a single rate for every flow, a mapping ``{(i, j, t): rate}``,
    or an iterable of ``(i, j, t, rate)`` rows.  Unlisted flows get rate 0.
    """
    labels = list(session_types)
    if len(set(labels)) != len(labels):
        raise ScenarioError("duplicate session type labels")
    table: dict[tuple[int, int, str], float] = {}
    default = 0.0
    if isinstance(rates, (int, float)):
        default = float(rates)
    else:
        rows = rates.items() if isinstance(rates, Mapping) else ((tuple(r[:3]), r[3]) for r in rates)
        for (i, j, t), rate in rows:
            if not (0 <= i < topology.node_count and 0 <= j < topology.node_count) or i == j:
                raise ScenarioError(f"invalid node pair ({i}, {j})")
            if t not in labels:
                raise ScenarioError(f"unknown session type {t!r}")
            key = (min(i, j), max(i, j), t)
            if key in table:
                raise ScenarioError(f"duplicate rate entry for {key}")
            table[key] = float(rate)
    flows = []
    for i, j in itertools.combinations(range(topology.node_count), 2):
        for t in labels:
            flows.append(FlowSpec((i, j), t, table.get((i, j, t), default)))
    return flows


def period_mean_duration(period: PeriodSpec) -> float:
    r = period.reach_probabilities()
    return float(sum(ri * ph.mean_duration for ri, ph in zip(r, period.phases)))


def period_exit_prob(period: PeriodSpec) -> float:
    """Probability that a period ends in success, given it was entered."""
    if period.kind is not PeriodKind.ATTEMPT:
        return 0.0
    r = period.reach_probabilities()
    return float(sum(ri * ph.exit_prob for ri, ph in zip(r, period.phases)))


def period_entry_probabilities(session: SessionTypeSpec, mode: ServiceMode,
                               p_gen: float | None = None) -> np.ndarray:
    """Probability that a session enters each period.

    Only strict-single sessions can end before their last period.  When
    ``p_gen`` is given it replaces the per-attempt success probability
    derived from the phases.
    """
    mode = ServiceMode(mode)
    n = len(session.periods)
    entry = np.ones(n)
    if mode is not ServiceMode.STRICT_SINGLE:
        return entry
    alive = 1.0
    for k, period in enumerate(session.periods):
        entry[k] = alive
        if period.kind is PeriodKind.ATTEMPT:
            alive *= 1.0 - (p_gen if p_gen is not None else period_exit_prob(period))
    return entry


def session_mean_duration(session: SessionTypeSpec, mode: ServiceMode, p_gen: float | None = None) -> float:
    """Mean time from admission to the end of the session (idle periods included)."""
    entry = period_entry_probabilities(session, mode, p_gen)
    means = np.array([period_mean_duration(p) for p in session.periods])
    return float(entry @ means)


def collapse_to_exponential(session: SessionTypeSpec) -> SessionTypeSpec:
    """Same layout with every period replaced by a single exponential phase.

    Period means and success probabilities are preserved, which is the
    matched exponential model the insensitivity argument compares against.
    """
    periods = []
    for p in session.periods:
        phase = PhaseSpec(period_mean_duration(p), 0.0, period_exit_prob(p))
        periods.append(PeriodSpec(p.kind, (phase,), p.nominal_duration))
    return SessionTypeSpec(session.label, tuple(periods))


@dataclass(frozen=True)
class ScenarioSpec:
    topology: Topology
    flows: tuple[FlowSpec, ...]
    service_mode: ServiceMode
    session_types: Mapping[str, SessionSource]
    attempt_duration: float = 115.072e-6
    attempt_success_prob: float = 1e-5
    discrete_step: float | None = None
    name: str = "scenario"
    _sessions: tuple[SessionTypeSpec, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "service_mode", ServiceMode(self.service_mode))
        object.__setattr__(self, "flows", tuple(self.flows))
        object.__setattr__(self, "session_types", dict(self.session_types))
        K = self.topology.node_count
        n_pairs = K * (K - 1) // 2
        if len(self.flows) > n_pairs * len(self.session_types):
            raise ScenarioError("more flows than node pairs times session types")
        seen = set()
        for f in self.flows:
            if max(f.nodes) >= K:
                raise ScenarioError(f"flow {f.nodes} references a node outside the topology")
            if f.session_type not in self.session_types:
                raise ScenarioError(f"flow {f.nodes} references unknown session type {f.session_type!r}")
            key = (f.nodes, f.session_type)
            if key in seen:
                raise ScenarioError(f"duplicate flow {key}")
            seen.add(key)
        cache: dict[tuple, SessionTypeSpec] = {}
        resolved = []
        for f in self.flows:
            src = self.session_types[f.session_type]
            if isinstance(src, SessionLayout):
                key = (f.session_type, self.flow_attempt_duration(f), self.flow_success_prob(f))
                if key not in cache:
                    cache[key] = src.build(self.service_mode, key[1], key[2])
                sess = cache[key]
            else:
                sess = src
                sess.validate_for(self.service_mode)
            resolved.append(sess)
        object.__setattr__(self, "_sessions", tuple(resolved))

    @property
    def flow_count(self) -> int:
        return len(self.flows)

    def session(self, i: int) -> SessionTypeSpec:
        """Resolved phase-level layout of flow ``i`` (overrides applied)."""
        return self._sessions[i]

    def flow_attempt_duration(self, f: FlowSpec) -> float:
        return self.attempt_duration if f.attempt_duration is None else f.attempt_duration

    def flow_success_prob(self, f: FlowSpec) -> float:
        return self.attempt_success_prob if f.attempt_success_prob is None else f.attempt_success_prob

    def rates(self) -> np.ndarray:
        return np.array([f.arrival_rate for f in self.flows], dtype=float)

    def with_rates(self, rates: Union[float, Sequence[float]]) -> "ScenarioSpec":
        if np.isscalar(rates):
            rates = [float(rates)] * len(self.flows)
        if len(rates) != len(self.flows):
            raise ScenarioError("need one rate per flow")
        flows = tuple(dataclasses.replace(f, arrival_rate=float(r)) for f, r in zip(self.flows, rates))
        return dataclasses.replace(self, flows=flows)

    def scale_rates(self, factor: float) -> "ScenarioSpec":
        return self.with_rates(self.rates() * factor)

    def with_mode(self, mode: ServiceMode) -> "ScenarioSpec":
        return dataclasses.replace(self, service_mode=ServiceMode(mode))

    def with_qubits(self, qubits: Union[int, Sequence[int]]) -> "ScenarioSpec":
        topo = dataclasses.replace(self.topology, qubits_per_node=qubits)
        return dataclasses.replace(self, topology=topo)

    def with_resources(self, resources: int) -> "ScenarioSpec":
        topo = dataclasses.replace(self.topology, resource_count=int(resources))
        return dataclasses.replace(self, topology=topo)

    def flows_in_group(self, group: str) -> list[int]:
        return [i for i, f in enumerate(self.flows) if f.group == group]

    def groups(self) -> list[str]:
        return sorted({f.group for f in self.flows if f.group is not None})


def homogeneous_scenario(node_count: int, qubits: int, resources: int, rate: float,
                         layout: SessionSource, mode: ServiceMode = ServiceMode.STRICT_SINGLE,
                         **kwargs) -> ScenarioSpec:
    """One flow per node pair, all sharing ``layout`` and ``rate``."""
    topo = Topology.uniform(node_count, qubits, resources)
    flows = build_flow_set(topo, [layout.label], rate)
    return ScenarioSpec(topo, tuple(flows), ServiceMode(mode), {layout.label: layout}, **kwargs)

