"""Built-in scenarios with the physical parameters of the NV-centre EGS experiments."""
from __future__ import annotations

import dataclasses
from typing import Callable

from egsloss.model import (
    TABLE_COX,
    ScenarioSpec,
    ServiceMode,
    SessionLayout,
    Topology,
    build_flow_set,
    homogeneous_scenario,
)

T_ATTEMPT = 115.072e-6
T_CALIB = 1e-3
P_GEN = 1e-5
BATCH_SIZE = 100
BATCHES = 10

# split-link scenario: half of the nodes sit behind 20 km instead of 10 km of fibre
ATTENUATION_DB_PER_KM = 0.2
P_ARRIVE_PER_KM = 10 ** (-ATTENUATION_DB_PER_KM / 10)
SET2_P_GEN_DERIVED = P_GEN * P_ARRIVE_PER_KM ** 20 / P_ARRIVE_PER_KM ** 10
SET2_P_GEN = 6.31e-6  # tabulated, the derived value rounded to three digits
SET2_T_ATTEMPT = 230.146e-6
SET2_ONE_WAY = 100.07e-6

DEFAULT_RATE = 1.0


def table_layout(label: str = "S1") -> SessionLayout:
    """100 attempts x 10 batches with 1 ms gaps; attempts use the tabulated 4-phase Cox shape."""
    return SessionLayout(label, BATCH_SIZE, BATCHES, T_CALIB, attempt_shape=TABLE_COX)


def table1(rate: float = DEFAULT_RATE, mode: ServiceMode = ServiceMode.STRICT_SINGLE) -> ScenarioSpec:
    return homogeneous_scenario(8, 1, 1, rate, table_layout(), mode, attempt_duration=T_ATTEMPT,
                                attempt_success_prob=P_GEN, name="table1")


def high_pgen(rate: float = DEFAULT_RATE, mode: ServiceMode = ServiceMode.STRICT_SINGLE) -> ScenarioSpec:
    return dataclasses.replace(table1(rate, mode), attempt_success_prob=1e-3, name="high-pgen")


def homogeneous_20(rate: float = DEFAULT_RATE, mode: ServiceMode = ServiceMode.STRICT_SINGLE,
                   resources: int = 1, qubits: int = 1) -> ScenarioSpec:
    return homogeneous_scenario(20, qubits, resources, rate, table_layout(), mode, attempt_duration=T_ATTEMPT,
                                attempt_success_prob=P_GEN, name="homogeneous-20")


def table2(rate: float = DEFAULT_RATE, mode: ServiceMode = ServiceMode.STRICT_SINGLE) -> ScenarioSpec:
    """Eight nodes; nodes 0-3 on 10 km links (set 1), nodes 4-7 on 20 km links.

    A flow belongs to group ``S2`` when either node is on a long link.  Its
    attempts take twice the base time step and succeed with the attenuated
    probability.
    """
    K = 8
    topo = Topology.uniform(K, 1, 1)
    near = set(range((K + 1) // 2))
    flows = []
    for f in build_flow_set(topo, ["S1"], rate):
        if set(f.nodes) <= near:
            flows.append(dataclasses.replace(f, group="S1"))
        else:
            flows.append(dataclasses.replace(f, group="S2", attempt_duration=SET2_T_ATTEMPT,
                                             attempt_success_prob=SET2_P_GEN))
    return ScenarioSpec(topo, tuple(flows), mode, {"S1": table_layout()}, attempt_duration=T_ATTEMPT,
                        attempt_success_prob=P_GEN, discrete_step=T_ATTEMPT, name="table2")


_PRESETS: dict[str, Callable[..., ScenarioSpec]] = {
    "table1": table1,
    "homogeneous-20": homogeneous_20,
    "table2": table2,
    "high-pgen": high_pgen,
}

DESCRIPTIONS = {
    "table1": "K=8, C=1, one qubit per node, 100x10 attempts of 115.072us, 1 ms gaps, p_gen=1e-5",
    "homogeneous-20": "as table1 with K=20 (190 flows)",
    "table2": "table1 with nodes 4-7 on 20 km links: their flows use 230.146us attempts, p_gen=6.31e-6",
    "high-pgen": "table1 with p_gen=1e-3",
}


def scenario_presets() -> dict[str, Callable[..., ScenarioSpec]]:
    return dict(_PRESETS)


def get_preset(name: str, **kwargs) -> ScenarioSpec:
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None
    return factory(**kwargs)
