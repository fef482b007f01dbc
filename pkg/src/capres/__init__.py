"""Scenario-based optimal capacity reservation on directed networks."""

from .admm import SolverConfig, SolveReport, select_rho, solve
from .bounds import (
    extend_policy,
    heuristic_policy,
    lower_bound,
    upper_bound,
    verify_optimality,
)
from .flows import build_kkt_cache, min_cost_flow, prox_flow
from .generators import generate_layered, generate_random
from .model import (
    Instance,
    Network,
    ScenarioSet,
    check_feasibility,
    split_capacitated_node,
    split_capacitated_node_instance,
    validate,
)
from .proxmax import prox_weighted_max, reservation_update

__version__ = "0.1.0"
