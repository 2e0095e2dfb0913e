"""Dynamic-phasor simulation of converter-fed offshore AC islands.

The package couples quasi-static controller models (one grid-forming
voltage source, any number of grid-following current sources) to an
algebraic positive-sequence network, and pairs the simulator with the
planning arithmetic that sizes the frequency-droop coordination the
controllers implement.
"""

from .converters import GflConverter, GfmConverter, PllState, gfm_droop_omega
from .coordination import (
    Contingency,
    DispatchPlan,
    EquilibriumPrediction,
    PlanError,
    SurvivabilityReport,
    check_n1_survivability,
    compute_gfl_droop_gain,
    predict_post_fault_equilibrium,
    scan_post_fault_equilibrium,
)
from .engine import (
    Event,
    InitializationError,
    SimSystem,
    SimulationError,
    Simulator,
    Trace,
)
from .network import (
    BaseQuantities,
    Branch,
    Bus,
    FaultStateError,
    Network,
    NetworkError,
    build_admittance,
)
from .scenario import (
    Scenario,
    ScenarioError,
    fixture_names,
    load_fixture,
    load_scenario,
    parse_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BaseQuantities",
    "Branch",
    "Bus",
    "Contingency",
    "DispatchPlan",
    "EquilibriumPrediction",
    "Event",
    "FaultStateError",
    "GflConverter",
    "GfmConverter",
    "InitializationError",
    "Network",
    "NetworkError",
    "PllState",
    "PlanError",
    "Scenario",
    "ScenarioError",
    "SimSystem",
    "SimulationError",
    "Simulator",
    "SurvivabilityReport",
    "Trace",
    "build_admittance",
    "check_n1_survivability",
    "compute_gfl_droop_gain",
    "fixture_names",
    "gfm_droop_omega",
    "load_fixture",
    "load_scenario",
    "parse_scenario",
    "predict_post_fault_equilibrium",
    "scan_post_fault_equilibrium",
    "__version__",
]
