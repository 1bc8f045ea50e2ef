"""Parameter sweeps comparing analytic and simulated blocking, written as CSV."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from egsloss import analytic
from egsloss.model import ScenarioError, ScenarioSpec, ServiceMode, session_mean_duration
from egsloss.simulator import EngineMode, SummaryMetrics, simulate

CSV_COLUMNS = (
    "sweep_value", "series", "flow_id_or_avg", "blocking_mean", "blocking_std", "idle_ratio",
    "entanglement_total", "mean_service_time_s", "replications", "seed",
)

AXES = ("rate", "qubits", "resources")


@dataclass
class SweepSpec:
    scenario: ScenarioSpec
    values: Sequence[float]
    axis: str = "rate"
    engines: Sequence[EngineMode] = ()
    modes: Sequence[ServiceMode] | None = None  # None keeps the scenario's mode
    replications: int = 1
    seed: int = 0
    duration: float = 115.0
    analytic: bool = True
    per_flow: bool = False
    rates: Sequence[float] | None = None  # second axis for qubit/resource grids
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ScenarioError(f"invalid sweep axis {self.axis!r}; choose from {', '.join(AXES)}")
        if len(self.values) == 0:
            raise ScenarioError("the sweep needs at least one value")
        if self.replications < 1:
            raise ScenarioError("replication count must be >= 1")
        if self.rates is not None and self.axis == "rate":
            raise ScenarioError("a rate grid needs a qubits or resources axis")
        self.engines = tuple(EngineMode(e) for e in self.engines)
        modes = self.modes if self.modes else (self.scenario.service_mode,)
        self.modes = tuple(ServiceMode(m) for m in modes)

    def points(self) -> list[tuple[str, ScenarioSpec]]:
        out = []
        for v in self.values:
            if self.axis == "rate":
                out.append((_fmt(v), self.scenario.with_rates(float(v))))
                continue
            base = (self.scenario.with_qubits(int(v)) if self.axis == "qubits"
                    else self.scenario.with_resources(int(v)))
            if self.rates is None:
                out.append((_fmt(v), base))
            else:
                for r in self.rates:
                    out.append((f"{self.axis}={int(v)};rate={_fmt(r)}", base.with_rates(float(r))))
        return out


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def compute_error_metric(analytic_series, simulated_series) -> float:
    """Absolute relative difference at the point where ``analytic - simulated`` is largest.

    ``d = yA - yS``, ``k = argmax(d)``, result ``|d[k]| / yA[k]``.
    """
    ya = np.asarray(analytic_series, dtype=float)
    ys = np.asarray(simulated_series, dtype=float)
    if ya.shape != ys.shape or ya.ndim != 1 or len(ya) == 0:
        raise ValueError("series must be non-empty, one-dimensional and aligned")
    d = ya - ys
    k = int(np.argmax(d))
    if ya[k] == 0:
        raise ZeroDivisionError("analytic value is zero at the maximizing point")
    return float(abs(d[k]) / ya[k])


def _row(value, series, which, mean, std, idle, ent, svc, reps, seed):
    return {"sweep_value": value, "series": series, "flow_id_or_avg": which, "blocking_mean": _fmt(mean),
            "blocking_std": _fmt(std), "idle_ratio": _fmt(idle), "entanglement_total": _fmt(ent),
            "mean_service_time_s": _fmt(svc), "replications": str(reps), "seed": "" if seed is None else str(seed)}


def analytic_rows(value: str, sc: ScenarioSpec, per_flow: bool) -> list[dict]:
    res = analytic.analyze(sc)
    series = f"analytic:{sc.service_mode.value}"
    svc = np.array([session_mean_duration(sc.session(i), sc.service_mode) for i in range(sc.flow_count)])
    idle = res.idle_probability
    b = res.flow_blocking
    rows = [_row(value, series, "avg", b.mean(), b.std(), idle, None, svc.mean(), 0, None),
            _row(value, series, "weighted", res.average, None, idle, None, svc.mean(), 0, None)]
    for g in sc.groups():
        idx = sc.flows_in_group(g)
        rows.append(_row(value, series, f"group:{g}", b[idx].mean(), b[idx].std(), idle, None,
                         svc[idx].mean(), 0, None))
    if per_flow:
        for i in range(sc.flow_count):
            rows.append(_row(value, series, f"f{i}", b[i], 0.0, idle, None, svc[i], 0, None))
    return rows


def simulation_rows(value: str, sc: ScenarioSpec, engine: EngineMode, sm: SummaryMetrics,
                    seed: int, per_flow: bool) -> list[dict]:
    series = f"{engine.value}:{sc.service_mode.value}"
    reps = sm.replications
    common = dict(idle=sm.idle_ratio, ent=sm.entanglement_total, svc=sm.mean_service_time, reps=reps, seed=seed)
    pooled_std = sm.blocking_pooled_sem * math.sqrt(reps) if reps > 1 else 0.0
    rows = [_row(value, series, "avg", sm.blocking_avg, sm.flow_std, **common),
            _row(value, series, "weighted", sm.blocking_pooled, pooled_std, **common)]
    for g in sc.groups():
        m, s = sm.group_blocking(sc.flows_in_group(g))
        rows.append(_row(value, series, f"group:{g}", m, s * math.sqrt(reps), **common))
    if per_flow:
        for i in range(sc.flow_count):
            rows.append(_row(value, series, f"f{i}", sm.flow_blocking[i],
                             sm.flow_blocking_sem[i] * math.sqrt(reps), **common))
    return rows


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Rows in sweep order, then service mode, then series (analytic first, engines as given)."""
    rows = []
    for value, point in spec.points():
        for mode in spec.modes:
            sc = point.with_mode(mode)
            if spec.analytic:
                rows.extend(analytic_rows(value, sc, spec.per_flow))
            for engine in spec.engines:
                sm = simulate(sc, engine, spec.duration, spec.seed, spec.replications, spec.workers)
                rows.extend(simulation_rows(value, sc, engine, sm, spec.seed, spec.per_flow))
    if spec.output:
        write_csv(rows, spec.output)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def error_table(rows: list[dict], which: str = "avg") -> dict[str, float]:
    """Error metric of every simulated series against the analytic series of the same mode."""
    series: dict[str, list[tuple[str, float]]] = {}
    for r in rows:
        if r["flow_id_or_avg"] == which:
            series.setdefault(r["series"], []).append((r["sweep_value"], float(r["blocking_mean"])))
    out = {}
    for name, pts in series.items():
        kind, mode = name.split(":", 1)
        ref = series.get(f"analytic:{mode}")
        if kind == "analytic" or ref is None:
            continue
        ref_map = dict(ref)
        keys = [k for k, _ in pts if k in ref_map]
        if not keys:
            continue
        sim_map = dict(pts)
        out[name] = compute_error_metric([ref_map[k] for k in keys], [sim_map[k] for k in keys])
    return out
