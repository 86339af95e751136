"""Classical FSMVRP baselines: ALNS, tabu search and a split-based GA."""
from .alns import AlnsConfig, alns_solve
from .common import BudgetedConfig, fleet_mix_split, initial_solution, retype
from .ga import GaConfig, ga_solve
from .tabu import TabuConfig, tabu_solve

__all__ = ["AlnsConfig", "BudgetedConfig", "GaConfig", "TabuConfig", "alns_solve", "fleet_mix_split",
           "ga_solve", "initial_solution", "retype", "tabu_solve"]
