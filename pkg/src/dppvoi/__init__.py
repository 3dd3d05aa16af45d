"""Deceptive path planning against an intervening observer.

Graph MDPs with candidate goals and interventions, a maximum-entropy observer,
classical and value-of-information deception costs, occupancy-measure LP
planning, a minimax conservative baseline and the intervention simulation
harness.
"""

from ._kernels import BACKEND
from .errors import (ConfigError, ConvergenceError, DppError, EmptyInterventionSetError,
                     InfeasibleLpError, InputError, InvalidModelError, MapParseError,
                     NumericalError, ObserverError, UnboundedLpError)
from .graph_mdp import (InducedMdp, Intervention, Mdp, WeightedGraph, build_induced_mdp,
                        hop_distance, max_reach_probability, shortest_path)
from .softmax_solver import CostMatrix, ValueTable, compute_cost_matrix, softmax_value_iteration
from .observer import BeliefTable, belief_along_trajectory, build_belief_table
from .objectives import DeceptionCostField, build_cost_field
from .lp_planner import OccupancyMeasure, Policy, plan
from .cpp_planner import GameValue, InfoSet, cpp_policy_rollout, minimax_value_iteration

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BeliefTable", "ConfigError", "ConvergenceError", "CostMatrix",
    "DeceptionCostField", "DppError", "EmptyInterventionSetError", "GameValue",
    "InducedMdp", "InfeasibleLpError", "InfoSet", "InputError", "Intervention",
    "InvalidModelError", "MapParseError", "Mdp", "NumericalError", "ObserverError",
    "OccupancyMeasure", "Policy", "UnboundedLpError", "ValueTable", "WeightedGraph",
    "belief_along_trajectory", "build_belief_table", "build_cost_field", "build_induced_mdp",
    "compute_cost_matrix", "cpp_policy_rollout", "hop_distance", "max_reach_probability",
    "minimax_value_iteration", "plan", "shortest_path", "softmax_value_iteration",
]
