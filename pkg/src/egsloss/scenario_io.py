"""Reading and writing scenario files (JSON, validated against ``schema/scenario.schema.json``)."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from egsloss.model import (
    CoxShape,
    FlowSpec,
    PeriodSpec,
    PhaseSpec,
    ScenarioError,
    ScenarioSpec,
    SessionLayout,
    SessionTypeSpec,
    Topology,
    build_flow_set,
    parse_time,
)


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("egsloss").joinpath("schema/scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(data: dict) -> None:
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"invalid scenario at {where}: {exc.message}") from exc


def _shape(d: dict | None, default: CoxShape) -> CoxShape:
    if d is None:
        return default
    return CoxShape(tuple(d["relative_means"]), tuple(d.get("next_probs", ())), d.get("normalize", True))


def _session(label: str, d: dict):
    if "layout" in d:
        lay = d["layout"]
        return SessionLayout(
            label, lay["attempts_per_batch"], lay["batch_count"], parse_time(lay.get("gap_duration", 0.0)),
            _shape(lay.get("attempt_shape"), CoxShape()), _shape(lay.get("gap_shape"), CoxShape()))
    periods = []
    for p in d["periods"]:
        phases = tuple(PhaseSpec(parse_time(ph["mean_duration"]), ph.get("next_phase_prob", 0.0),
                                 ph.get("exit_prob", 0.0)) for ph in p["phases"])
        nominal = p.get("nominal_duration")
        periods.append(PeriodSpec(p["kind"], phases, None if nominal is None else parse_time(nominal)))
    return SessionTypeSpec(label, tuple(periods))


def from_dict(data: dict) -> ScenarioSpec:
    validate(data)
    t = data["topology"]
    topo = Topology(t["node_count"], t["qubits_per_node"], t["resource_count"])
    types = {label: _session(label, d) for label, d in data["session_types"].items()}
    fl = data["flows"]
    if isinstance(fl, dict):
        rates = fl.get("rates")
        table = [tuple(r) for r in rates] if rates is not None else fl.get("rate", 0.0)
        flows = build_flow_set(topo, fl["session_types"], table)
    else:
        flows = []
        for f in fl:
            dur = f.get("attempt_duration")
            flows.append(FlowSpec(tuple(f["nodes"]), f["session_type"], f["arrival_rate"],
                                  f.get("attempt_success_prob"), None if dur is None else parse_time(dur),
                                  f.get("group")))
    kw = {}
    if "attempt_duration" in data:
        kw["attempt_duration"] = parse_time(data["attempt_duration"])
    if "attempt_success_prob" in data:
        kw["attempt_success_prob"] = float(data["attempt_success_prob"])
    if data.get("discrete_step") is not None:
        kw["discrete_step"] = parse_time(data["discrete_step"])
    return ScenarioSpec(topo, tuple(flows), data["service_mode"], types, name=data.get("name", "scenario"), **kw)


def _shape_dict(s: CoxShape) -> dict:
    return {"relative_means": list(s.relative_means), "next_probs": list(s.next_probs), "normalize": s.normalize}


def _session_dict(src) -> dict:
    if isinstance(src, SessionLayout):
        return {"layout": {
            "attempts_per_batch": src.attempts_per_batch, "batch_count": src.batch_count,
            "gap_duration": src.gap_duration if src.gap_duration > 0 else 1.0,
            "attempt_shape": _shape_dict(src.attempt_shape), "gap_shape": _shape_dict(src.gap_shape)}}
    periods = []
    for p in src.periods:
        d = {"kind": p.kind.value, "phases": [
            {"mean_duration": ph.mean_duration, "next_phase_prob": ph.next_phase_prob, "exit_prob": ph.exit_prob}
            for ph in p.phases]}
        if p.nominal_duration is not None:
            d["nominal_duration"] = p.nominal_duration
        periods.append(d)
    return {"periods": periods}


def to_dict(scenario: ScenarioSpec) -> dict:
    topo = scenario.topology
    flows = []
    for f in scenario.flows:
        d = {"nodes": list(f.nodes), "session_type": f.session_type, "arrival_rate": f.arrival_rate}
        if f.attempt_success_prob is not None:
            d["attempt_success_prob"] = f.attempt_success_prob
        if f.attempt_duration is not None:
            d["attempt_duration"] = f.attempt_duration
        if f.group is not None:
            d["group"] = f.group
        flows.append(d)
    out = {
        "name": scenario.name,
        "topology": {"node_count": topo.node_count, "qubits_per_node": list(topo.qubits_per_node),
                     "resource_count": topo.resource_count},
        "service_mode": scenario.service_mode.value,
        "attempt_duration": scenario.attempt_duration,
        "attempt_success_prob": scenario.attempt_success_prob,
        "discrete_step": scenario.discrete_step,
        "session_types": {k: _session_dict(v) for k, v in scenario.session_types.items()},
        "flows": flows,
    }
    return out


def load_scenario(path) -> ScenarioSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return from_dict(data)


def save_scenario(scenario: ScenarioSpec, path) -> None:
    Path(path).write_text(json.dumps(to_dict(scenario), indent=2) + "\n", encoding="utf-8")
