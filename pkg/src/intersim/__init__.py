"""Two-agent intersection interaction simulator.

A particle-belief, expected-free-energy driven model of two vehicles
negotiating a crossing, with normative expectations (stop signs, first-come
priority, speed limits) and explicit prompt/yield signaling, plus a Monte
Carlo batch harness for outcome statistics.
"""

from .config import SimConfig, load_config
from .belief import ParticleBelief, SignalBelief, initial_belief, \
    signal_posterior_update
from .planner import EfeBreakdown, Policy, SurpriseState, cem_optimize, \
    evaluate_efe, g_prompt, select_signals
from .simulate import Outcome, adversarial_action, classify_outcome, \
    run_simulation
from .batch import ConditionGrid, OutcomeTable, run_batch, wilson_interval
from .states import AgentAction, Scenario, StateCloud
from .vehicle import ControlInput, RoadFrame, VehicleGeometry, VehicleState, \
    rect_overlap, step_bicycle, to_road_frame

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "load_config",
    "ParticleBelief", "SignalBelief", "initial_belief", "signal_posterior_update",
    "EfeBreakdown", "Policy", "SurpriseState", "cem_optimize", "evaluate_efe",
    "g_prompt", "select_signals",
    "Outcome", "adversarial_action", "classify_outcome", "run_simulation",
    "ConditionGrid", "OutcomeTable", "run_batch", "wilson_interval",
    "AgentAction", "Scenario", "StateCloud",
    "ControlInput", "RoadFrame", "VehicleGeometry", "VehicleState",
    "rect_overlap", "step_bicycle", "to_road_frame",
    "__version__",
]
