"""Fleet size and mix vehicle routing: instances, an MDP with a learned
attention policy, classical heuristics and an exact oracle."""
__version__ = "0.1.0"

from .errors import FleetMixError
from .instance import Customer, Instance, Route, Solution, VehicleType, evaluate_solution, validate_solution

__all__ = ["Customer", "FleetMixError", "Instance", "Route", "Solution", "VehicleType", "__version__",
           "evaluate_solution", "validate_solution"]
