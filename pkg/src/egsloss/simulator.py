"""Stochastic simulation of the EGS under the three service models.

Three engines share one event loop and differ only in how a session's
period durations are drawn:

* ``DISCRETE``: every period lasts a fixed whole number of base time steps,
  inter-arrival times are exponential samples rounded up to whole steps.
* ``EXPONENTIAL``: one exponential per period with the period mean.
* ``COX``: each period walks its phase decomposition.

A session is sampled in full when it enters the system (see
:func:`egsloss.kernels.walk_session`) and then played out as a series of
*segments*: even segments hold a switch resource, odd segments are jump-over
idle gaps.  Strict sessions consist of a single segment.

Random numbers come from ``SeedSequence(seed, spawn_key=(replication, flow,
stream))`` with stream 0 for arrivals and stream 1 for session sampling, so
flows never share a stream and adding a flow leaves the others untouched.
"""
from __future__ import annotations

import heapq
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial

import numpy as np

from egsloss import kernels
from egsloss.model import (
    PeriodKind,
    PeriodSpec,
    ScenarioError,
    ScenarioSpec,
    ServiceMode,
    SessionTypeSpec,
    period_exit_prob,
    period_mean_duration,
)

STREAM_ARRIVALS = 0
STREAM_SERVICE = 1

# event priorities at equal timestamps: releases, then re-acquisitions, then arrivals
_PRIO_BLOCK_END = 0
_PRIO_IDLE_END = 1
_PRIO_ARRIVAL = 2

_STEP_TOLERANCE = 1e-3
_ARRIVAL_CHUNK = 512


class EngineMode(str, Enum):
    DISCRETE = "discrete"
    EXPONENTIAL = "exponential"
    COX = "cox"

    @property
    def kernel_code(self) -> int:
        return {
            EngineMode.DISCRETE: kernels.ENGINE_DISCRETE,
            EngineMode.EXPONENTIAL: kernels.ENGINE_EXPONENTIAL,
            EngineMode.COX: kernels.ENGINE_COX,
        }[self]


class Decision(str, Enum):
    ADMIT = "admit"
    BLOCKED = "blocked"
    NOT_ISSUED = "not_issued"


class Routing(str, Enum):
    RESUME_NEXT_ACTIVE = "resume_next_active"
    JUMP_TO_NEXT_IDLE = "jump_to_next_idle"
    TERMINATE = "terminate"


def stream(seed: int, replication: int, flow: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one (replication, flow, purpose) triple."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), int(flow), int(stream_id)))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# session compilation


def _step_count(duration: float, step: float, what: str) -> int:
    n = round(duration / step)
    if n < 1 or abs(n * step - duration) > _STEP_TOLERANCE * duration:
        raise ScenarioError(f"{what} {duration:g}s is not an integer multiple of the time step {step:g}s")
    return n


def _ceil_steps(duration: float, step: float) -> int:
    return max(1, math.ceil(duration / step - 1e-9))


def period_ticks(period: PeriodSpec, step: float) -> int:
    """Fixed length of a period in whole time steps (attempts must fit exactly)."""
    if period.kind is PeriodKind.ATTEMPT:
        return _step_count(period.fixed_duration, step, "attempt duration")
    return _ceil_steps(period.fixed_duration, step)


@dataclass(frozen=True)
class _Compiled:
    per_start: np.ndarray
    per_len: np.ndarray
    per_seg: np.ndarray
    per_fixed: np.ndarray
    per_mean: np.ndarray
    per_exit: np.ndarray
    ph_mean: np.ndarray
    ph_next: np.ndarray
    ph_succ: np.ndarray
    n_seg: int
    max_draws: int


def _compile(periods: tuple[PeriodSpec, ...], step: float | None) -> _Compiled:
    per_start, per_len, per_seg, per_fixed, per_mean, per_exit = [], [], [], [], [], []
    ph_mean, ph_next, ph_succ = [], [], []
    seg = 0
    for k, period in enumerate(periods):
        if k and period.holds_resource != periods[k - 1].holds_resource:
            seg += 1
        per_start.append(len(ph_mean))
        per_len.append(len(period.phases))
        per_seg.append(seg)
        per_fixed.append(float(period_ticks(period, step)) if step else 0.0)
        per_mean.append(period_mean_duration(period))
        per_exit.append(period_exit_prob(period))
        for j, ph in enumerate(period.phases):
            ph_mean.append(ph.mean_duration)
            ph_next.append(ph.next_phase_prob if j + 1 < len(period.phases) else 0.0)
            ph_succ.append(ph.exit_prob)
    i64 = partial(np.array, dtype=np.int64)
    f64 = partial(np.array, dtype=np.float64)
    return _Compiled(i64(per_start), i64(per_len), i64(per_seg), f64(per_fixed), f64(per_mean),
                     f64(per_exit), f64(ph_mean), f64(ph_next), f64(ph_succ), seg + 1,
                     max(len(per_start), len(ph_mean)))


class _DrawBuffer:
    """Pre-drawn (exponential, uniform) pairs for one flow's session sampling."""

    def __init__(self, rng: np.random.Generator, need_expo: bool, chunk: int):
        self.rng = rng
        self.need_expo = need_expo
        self.chunk = chunk
        self.unif = np.empty(0)
        self.expo = np.empty(0)
        self.pos = 0

    def ensure(self, n: int) -> None:
        left = len(self.unif) - self.pos
        if left >= n:
            return
        size = max(self.chunk, 4 * n)
        unif = self.rng.random(size)
        self.unif = np.concatenate([self.unif[self.pos:], unif])
        if self.need_expo:
            self.expo = np.concatenate([self.expo[self.pos:], self.rng.standard_exponential(size)])
        else:
            self.expo = self.unif
        self.pos = 0


# ---------------------------------------------------------------------------
# state and the per-event rules


class SessionInstance:
    """A session inside the system; segment durations are fixed at entry."""

    __slots__ = ("flow", "segment", "resource_held", "start", "end", "successes",
                 "seg_dur", "seg_succ", "n_seg", "admitted")

    def __init__(self, flow: int, seg_dur: np.ndarray, seg_succ: np.ndarray, start: float, admitted: bool):
        self.flow = flow
        self.segment = 0
        self.resource_held = False
        self.start = start
        self.end = math.nan
        self.successes = 0
        self.seg_dur = seg_dur
        self.seg_succ = seg_succ
        self.n_seg = len(seg_dur)
        self.admitted = admitted


class SwitchState:
    def __init__(self, scenario: ScenarioSpec):
        self.capacity = scenario.topology.resource_count
        self.qubit_cap = list(scenario.topology.qubits_per_node)
        self.qubits_used = [0] * scenario.topology.node_count
        self.busy = 0
        self.nodes = [f.nodes for f in scenario.flows]

    def qubits_free(self, flow: int) -> bool:
        u, v = self.nodes[flow]
        return self.qubits_used[u] < self.qubit_cap[u] and self.qubits_used[v] < self.qubit_cap[v]

    def take_qubits(self, flow: int) -> None:
        u, v = self.nodes[flow]
        self.qubits_used[u] += 1
        self.qubits_used[v] += 1

    def release_qubits(self, flow: int) -> None:
        u, v = self.nodes[flow]
        self.qubits_used[u] -= 1
        self.qubits_used[v] -= 1

    def check(self) -> None:
        if not 0 <= self.busy <= self.capacity:
            raise AssertionError("resource count out of range")
        if any(not 0 <= q <= c for q, c in zip(self.qubits_used, self.qubit_cap)):
            raise AssertionError("qubit count out of range")


def admit_request(state: SwitchState, flow: int) -> Decision:
    """Admission rule for a first call; an admitted request seizes a resource and two qubits."""
    if not state.qubits_free(flow):
        return Decision.NOT_ISSUED
    if state.busy >= state.capacity:
        return Decision.BLOCKED
    state.busy += 1
    state.take_qubits(flow)
    return Decision.ADMIT


def jump_over_retry(state: SwitchState, session: SessionInstance) -> Routing:
    """Re-acquisition at the end of an idle segment."""
    if session.resource_held or session.segment % 2 == 0:
        raise ValueError("jump_over_retry applies to sessions at the end of an idle period")
    if state.busy < state.capacity:
        state.busy += 1
        session.resource_held = True
        session.segment += 1
        return Routing.RESUME_NEXT_ACTIVE
    if session.segment + 2 < session.n_seg:
        session.segment += 2
        return Routing.JUMP_TO_NEXT_IDLE
    return Routing.TERMINATE


def service_model_step(state: SwitchState, session: SessionInstance) -> int | None:
    """Close the current resource-holding segment; return the next segment or ``None`` at termination.

    Successes of the closed segment are credited.  Strict-single early exit
    is already reflected in the sampled segment, which stops at the success.
    """
    if not session.resource_held:
        raise ValueError("session does not hold a resource")
    state.busy -= 1
    session.resource_held = False
    session.successes += int(session.seg_succ[session.segment])
    if session.segment + 1 >= session.n_seg:
        return None
    session.segment += 1
    return session.segment


def attempt_outcome(rng: np.random.Generator, p_gen: float) -> bool:
    """Bernoulli(p_gen) attempt, drawn the way the engines draw it: ``U < p_gen``."""
    if not 0.0 <= p_gen <= 1.0:
        raise ValueError("p_gen must lie in [0, 1]")
    return bool(rng.random() < p_gen)


def sample_period_duration(period: PeriodSpec, engine: EngineMode, rng: np.random.Generator,
                           step: float | None = None) -> tuple[float, bool, int]:
    """One period's ``(duration, exited_early, successes)`` under ``engine``.

    ``exited_early`` reports a success that would end a strict-single
    session.  Uses the same kernel and draw order as the event loop.
    """
    engine = EngineMode(engine)
    if engine is EngineMode.DISCRETE and not step:
        raise ScenarioError("the discrete engine needs a time step")
    comp = _compile((period,), step if engine is EngineMode.DISCRETE else None)
    n = comp.max_draws
    unif = rng.random(n)
    expo = rng.standard_exponential(n)
    seg_dur = np.zeros(comp.n_seg)
    seg_succ = np.zeros(comp.n_seg, dtype=np.int64)
    kernels.walk_session(engine.kernel_code, False, comp.per_start, comp.per_len, comp.per_seg,
                         comp.per_fixed, comp.per_mean, comp.per_exit, comp.ph_mean, comp.ph_next,
                         comp.ph_succ, expo, unif, 0, seg_dur, seg_succ)
    dur = float(seg_dur.sum())
    if engine is EngineMode.DISCRETE:
        dur *= step
    succ = int(seg_succ.sum())
    return dur, succ > 0, succ


# ---------------------------------------------------------------------------
# metrics


@dataclass
class RunMetrics:
    """Counters of one replication; per-flow arrays are indexed like ``scenario.flows``."""

    issued: np.ndarray
    admitted: np.ndarray
    blocked: np.ndarray
    not_issued: np.ndarray
    retrial_issued: np.ndarray
    retrial_blocked: np.ndarray
    entanglement: np.ndarray
    service_time_sum: np.ndarray
    service_count: np.ndarray
    idle_time: float
    duration: float
    seed: int = 0
    replication: int = 0

    @classmethod
    def empty(cls, flows: int, duration: float, seed: int = 0, replication: int = 0) -> "RunMetrics":
        z = lambda dt=np.int64: np.zeros(flows, dtype=dt)  # noqa: E731
        return cls(z(), z(), z(), z(), z(), z(), z(), z(float), z(), 0.0, duration, seed, replication)

    @property
    def requests(self) -> np.ndarray:
        return self.issued + self.retrial_issued

    @property
    def flow_blocking(self) -> np.ndarray:
        """Blocked over issued requests per flow, first calls and re-acquisitions together (nan if none)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return (self.blocked + self.retrial_blocked) / self.requests

    @property
    def first_call_blocking(self) -> float:
        return _ratio(self.blocked.sum(), self.issued.sum())

    @property
    def retrial_blocking(self) -> float:
        return _ratio(self.retrial_blocked.sum(), self.retrial_issued.sum())

    @property
    def pooled_blocking(self) -> float:
        return _ratio((self.blocked + self.retrial_blocked).sum(), self.requests.sum())

    @property
    def idle_ratio(self) -> float:
        return self.idle_time / self.duration

    @property
    def mean_service_time(self) -> float:
        return _ratio(self.service_time_sum.sum(), self.service_count.sum())

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        kw = dict(d)
        for k in ("issued", "admitted", "blocked", "not_issued", "retrial_issued", "retrial_blocked",
                  "entanglement", "service_count"):
            kw[k] = np.array(kw[k], dtype=np.int64)
        kw["service_time_sum"] = np.array(kw["service_time_sum"], dtype=float)
        return cls(**kw)


def _ratio(a, b) -> float:
    return float(a / b) if b else math.nan


def _mean_sem(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1 or np.all(x == x[0]):
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


@dataclass
class SummaryMetrics:
    flow_blocking: np.ndarray
    flow_blocking_sem: np.ndarray
    blocking_avg: float  # mean over runs of the mean over flows
    blocking_avg_sem: float
    blocking_pooled: float  # blocked / issued over all flows
    blocking_pooled_sem: float
    flow_std: float  # mean over runs of the std across flows
    first_call_blocking: float
    first_call_sem: float
    retrial_blocking: float
    retrial_sem: float
    idle_ratio: float
    entanglement_total: float  # per run
    mean_service_time: float
    replications: int
    per_run: np.ndarray = field(repr=False)  # replications x flows

    def group_blocking(self, flows) -> tuple[float, float]:
        """Mean over runs of the mean blocking of ``flows``, with its standard error."""
        sub = self.per_run[:, list(flows)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return _mean_sem(np.nanmean(sub, axis=1))


def aggregate_runs(runs: list[RunMetrics]) -> SummaryMetrics:
    if not runs:
        raise ValueError("aggregate_runs needs at least one run")
    F = len(runs[0].issued)
    if any(len(r.issued) != F for r in runs):
        raise ValueError("runs come from different scenarios")
    per_run = np.array([r.flow_blocking for r in runs]).reshape(len(runs), F)
    fb, fs = [], []
    for i in range(F):
        m, s = _mean_sem(per_run[:, i])
        fb.append(m)
        fs.append(s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan rows for runs without requests
        avg = np.nanmean(per_run, axis=1)
        spread = np.nanstd(per_run, axis=1)
    a, a_s = _mean_sem(avg)
    p, p_s = _mean_sem([r.pooled_blocking for r in runs])
    fc, fc_s = _mean_sem([r.first_call_blocking for r in runs])
    rt, rt_s = _mean_sem([r.retrial_blocking for r in runs])
    st = _ratio(sum(r.service_time_sum.sum() for r in runs), sum(r.service_count.sum() for r in runs))
    spread = spread[np.isfinite(spread)]
    return SummaryMetrics(
        np.array(fb), np.array(fs), a, a_s, p, p_s, float(spread.mean()) if len(spread) else math.nan,
        fc, fc_s, rt, rt_s, float(np.mean([r.idle_ratio for r in runs])),
        float(np.mean([r.entanglement.sum() for r in runs])), st, len(runs), per_run)


# ---------------------------------------------------------------------------
# the event loop


def discrete_step(scenario: ScenarioSpec) -> float:
    return scenario.discrete_step or scenario.attempt_duration


def run_simulation(scenario: ScenarioSpec, engine: EngineMode, duration: float, seed: int,
                   replication: int = 0, check_invariants: bool = False) -> RunMetrics:
    """Simulate ``duration`` seconds from an empty system.

    Deterministic in ``(scenario, engine, duration, seed, replication)``.
    """
    engine = EngineMode(engine)
    if not duration > 0:
        raise ValueError("duration must be positive")
    F = scenario.flow_count
    mode = scenario.service_mode
    single = mode is ServiceMode.STRICT_SINGLE
    jump = mode is ServiceMode.JUMP_OVER
    unit = discrete_step(scenario) if engine is EngineMode.DISCRETE else 1.0
    step = unit if engine is EngineMode.DISCRETE else None
    horizon = duration / unit

    cache: dict[int, _Compiled] = {}
    comps = []
    for i in range(F):
        s = scenario.session(i)
        if id(s) not in cache:
            cache[id(s)] = _compile(s.periods, step)
        comps.append(cache[id(s)])

    m = RunMetrics.empty(F, duration, seed, replication)
    issued, admitted, blocked, not_issued = m.issued, m.admitted, m.blocked, m.not_issued
    r_issued, r_blocked, ent = m.retrial_issued, m.retrial_blocked, m.entanglement
    svc_sum, svc_cnt = m.service_time_sum, m.service_count

    state = SwitchState(scenario)
    rates = scenario.rates()
    arr_rng = [stream(seed, replication, i, STREAM_ARRIVALS) for i in range(F)]
    arr_buf = [np.empty(0)] * F
    arr_pos = [0] * F
    bufs = [_DrawBuffer(stream(seed, replication, i, STREAM_SERVICE), engine is not EngineMode.DISCRETE,
                        max(4096, 4 * comps[i].max_draws)) for i in range(F)]
    code = engine.kernel_code
    walk = kernels.walk_session

    def next_gap(i):
        if arr_pos[i] >= len(arr_buf[i]):
            arr_buf[i] = arr_rng[i].standard_exponential(_ARRIVAL_CHUNK) / rates[i]
            arr_pos[i] = 0
        g = arr_buf[i][arr_pos[i]]
        arr_pos[i] += 1
        if step:
            return float(max(1, math.ceil(g / step)))
        return float(g)

    def sample(i, t, was_admitted):
        c = comps[i]
        b = bufs[i]
        b.ensure(c.max_draws)
        seg_dur = np.zeros(c.n_seg)
        seg_succ = np.zeros(c.n_seg, dtype=np.int64)
        _, b.pos = walk(code, single, c.per_start, c.per_len, c.per_seg, c.per_fixed, c.per_mean,
                        c.per_exit, c.ph_mean, c.ph_next, c.ph_succ, b.expo, b.unif, b.pos, seg_dur, seg_succ)
        return SessionInstance(i, seg_dur, seg_succ, t, was_admitted)

    heap: list = []
    seq = 0
    for i in range(F):
        if rates[i] > 0:
            heap.append((next_gap(i), _PRIO_ARRIVAL, i, seq, None))
            seq += 1
    heapq.heapify(heap)

    def finish(sess, t):
        state.release_qubits(sess.flow)
        sess.end = t
        if sess.admitted:
            svc_sum[sess.flow] += (t - sess.start) * unit
            svc_cnt[sess.flow] += 1

    capacity = state.capacity
    idle = 0.0
    last = 0.0
    while heap:
        t, prio, i, _, sess = heapq.heappop(heap)
        if t > horizon:
            break
        if state.busy < capacity:
            idle += t - last
        last = t
        if sess is None:
            heapq.heappush(heap, (t + next_gap(i), _PRIO_ARRIVAL, i, seq, None))
            seq += 1
            decision = admit_request(state, i)
            if decision is Decision.NOT_ISSUED:
                not_issued[i] += 1
                continue
            issued[i] += 1
            if decision is Decision.ADMIT:
                admitted[i] += 1
                s = sample(i, t, True)
                s.resource_held = True
                heapq.heappush(heap, (t + s.seg_dur[0], _PRIO_BLOCK_END, i, seq, s))
                seq += 1
                continue
            blocked[i] += 1
            if jump and comps[i].n_seg > 1:
                state.take_qubits(i)
                s = sample(i, t, False)
                s.segment = 1
                heapq.heappush(heap, (t + s.seg_dur[1], _PRIO_IDLE_END, i, seq, s))
                seq += 1
        elif prio == _PRIO_BLOCK_END:
            before = sess.successes
            nxt = service_model_step(state, sess)
            ent[i] += sess.successes - before
            if nxt is None:
                finish(sess, t)
            else:
                heapq.heappush(heap, (t + sess.seg_dur[nxt], _PRIO_IDLE_END, i, seq, sess))
                seq += 1
        else:
            r_issued[i] += 1
            route = jump_over_retry(state, sess)
            if route is Routing.RESUME_NEXT_ACTIVE:
                heapq.heappush(heap, (t + sess.seg_dur[sess.segment], _PRIO_BLOCK_END, i, seq, sess))
            else:
                r_blocked[i] += 1
                if route is Routing.TERMINATE:
                    finish(sess, t)
                    continue
                heapq.heappush(heap, (t + sess.seg_dur[sess.segment], _PRIO_IDLE_END, i, seq, sess))
            seq += 1
        if check_invariants:
            state.check()
    if state.busy < capacity:
        idle += horizon - last
    m.idle_time = idle * unit
    return m


def _one(args):
    scenario, engine, duration, seed, rep = args
    return run_simulation(scenario, engine, duration, seed, rep)


def run_replications(scenario: ScenarioSpec, engine: EngineMode, duration: float, seed: int,
                     replications: int, workers: int = 1) -> list[RunMetrics]:
    """Independent replications ``0..replications-1``; results are in replication order."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    jobs = [(scenario, engine, duration, seed, r) for r in range(replications)]
    if workers <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))


def simulate(scenario: ScenarioSpec, engine: EngineMode, duration: float, seed: int,
             replications: int, workers: int = 1) -> SummaryMetrics:
    return aggregate_runs(run_replications(scenario, engine, duration, seed, replications, workers))
