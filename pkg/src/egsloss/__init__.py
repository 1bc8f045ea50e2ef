"""Blocking probabilities of an entanglement generation switch (EGS).

``analytic`` evaluates the product-form blocking formulas, ``oracle`` solves
the phase-level Markov chain of tiny scenarios by brute force, and
``simulator`` runs discrete, exponential and Coxian event simulations.
"""
from egsloss.analytic import analyze, average_blocking, blocking_probabilities, blocking_probability, erlang_b
from egsloss.kernels import BACKEND
from egsloss.model import (
    CoxShape,
    FlowSpec,
    PeriodKind,
    PeriodSpec,
    PhaseSpec,
    ScenarioError,
    ScenarioSpec,
    ServiceMode,
    SessionLayout,
    SessionTypeSpec,
    Topology,
    build_flow_set,
    homogeneous_scenario,
)
from egsloss.simulator import EngineMode, aggregate_runs, run_simulation

__version__ = "0.1.0"
