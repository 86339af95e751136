"""Domain types, distance/cost arithmetic and solution validation.

Everything here is immutable and pure. Node 0 is always the depot; customers
are numbered 1..n in the order they were given.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapacityViolation, InvalidInstance, NotAPartition, UnknownType

# Demands/capacities are compared with this slack so that a route whose load
# equals the capacity up to float rounding is not rejected.
LOAD_EPS = 1e-9


@dataclass(frozen=True)
class VehicleType:
    capacity: float
    fixed_cost: float
    unit_cost: float
    type_id: int = 0

    def __post_init__(self):
        if not self.capacity > 0:
            raise InvalidInstance(f"vehicle type {self.type_id}: capacity must be > 0, got {self.capacity}")
        if not self.unit_cost > 0:
            raise InvalidInstance(f"vehicle type {self.type_id}: unit_cost must be > 0, got {self.unit_cost}")
        if not self.fixed_cost >= 0:
            raise InvalidInstance(f"vehicle type {self.type_id}: fixed_cost must be >= 0, got {self.fixed_cost}")


class Customer(NamedTuple):
    x: float
    y: float
    demand: float


@dataclass(frozen=True)
class Instance:
    depot: tuple[float, float]
    customers: tuple[Customer, ...]
    fleet: tuple[VehicleType, ...]
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))
        object.__setattr__(
            self, "customers", tuple(Customer(float(c[0]), float(c[1]), float(c[2])) for c in self.customers)
        )
        fleet = tuple(
            VehicleType(float(v.capacity), float(v.fixed_cost), float(v.unit_cost), k) for k, v in enumerate(self.fleet)
        )
        object.__setattr__(self, "fleet", fleet)
        if len(self.customers) < 1:
            raise InvalidInstance("an instance needs at least one customer")
        if len(self.fleet) < 1:
            raise InvalidInstance("an instance needs at least one vehicle type")
        max_q = max(v.capacity for v in fleet)
        for i, c in enumerate(self.customers, start=1):
            if not c.demand > 0:
                raise InvalidInstance(f"customer {i}: demand must be > 0, got {c.demand}")
            if c.demand > max_q + LOAD_EPS:
                raise InvalidInstance(f"customer {i}: demand {c.demand} exceeds the largest capacity {max_q}")
        vals = [*self.depot] + [v for c in self.customers for v in c]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInstance("coordinates and demands must be finite")

    @classmethod
    def from_arrays(cls, depot, customer_xy, demands, capacities, fixed_costs, unit_costs, name="instance"):
        customers = tuple(Customer(float(x), float(y), float(d)) for (x, y), d in zip(customer_xy, demands))
        fleet = tuple(VehicleType(float(q), float(f), float(c), k)
                      for k, (q, f, c) in enumerate(zip(capacities, fixed_costs, unit_costs)))
        return cls((float(depot[0]), float(depot[1])), customers, fleet, name)

    @property
    def n(self) -> int:
        return len(self.customers)

    @property
    def num_types(self) -> int:
        return len(self.fleet)

    @cached_property
    def coords(self) -> np.ndarray:
        """(n+1, 2) array, row 0 is the depot."""
        arr = np.array([self.depot] + [(c.x, c.y) for c in self.customers], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def demands(self) -> np.ndarray:
        """(n+1,) array with a zero demand for the depot."""
        arr = np.array([0.0] + [c.demand for c in self.customers], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def capacities(self) -> np.ndarray:
        arr = np.array([v.capacity for v in self.fleet], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def fixed_costs(self) -> np.ndarray:
        arr = np.array([v.fixed_cost for v in self.fleet], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def unit_costs(self) -> np.ndarray:
        arr = np.array([v.unit_cost for v in self.fleet], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        dist.setflags(write=False)
        return dist

    @cached_property
    def dist_rows(self) -> list[list[float]]:
        # plain Python lists are much faster than numpy for scalar lookups
        return self.distances.tolist()

    def with_customers(self, indices: Sequence[int], name: str | None = None) -> "Instance":
        """Sub-instance keeping only the given customers (1-based), same depot and fleet."""
        custs = tuple(self.customers[i - 1] for i in indices)
        return Instance(self.depot, custs, self.fleet, name or f"{self.name}-sub{len(custs)}")


@dataclass(frozen=True)
class Route:
    vehicle_type: int
    stops: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(int(s) for s in self.stops))
        if len(self.stops) == 0:
            raise ValueError("a route must visit at least one customer")
        if 0 in self.stops:
            raise ValueError("route stops must not contain the depot (index 0)")
        if len(set(self.stops)) != len(self.stops):
            raise ValueError(f"route visits a customer twice: {self.stops}")


@dataclass(frozen=True)
class Solution:
    routes: tuple[Route, ...]
    total_cost: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))

    @classmethod
    def from_routes(cls, inst: Instance, routes) -> "Solution":
        routes = tuple(r if isinstance(r, Route) else Route(r[0], tuple(r[1])) for r in routes)
        return cls(routes, evaluate_solution(inst, cls(routes)))

    @property
    def num_vehicles(self) -> int:
        return len(self.routes)


def distance_matrix(inst: Instance) -> np.ndarray:
    return inst.distances


def tour_length(inst: Instance, stops: Sequence[int]) -> float:
    """Closed depot -> stops -> depot length."""
    # fsum makes the length independent of travel direction, bit for bit
    d = inst.dist_rows
    path = [0, *stops, 0]
    return math.fsum(d[a][b] for a, b in zip(path, path[1:]))


def route_load(inst: Instance, stops: Sequence[int]) -> float:
    dem = inst.customers
    return math.fsum(dem[s - 1].demand for s in stops)


def route_cost(inst: Instance, route: Route) -> tuple[float, float]:
    """Return ``(fixed, variable)`` cost of one route."""
    if not 0 <= route.vehicle_type < inst.num_types:
        raise UnknownType(f"vehicle type {route.vehicle_type} not in catalog of size {inst.num_types}")
    for s in route.stops:
        if not 1 <= s <= inst.n:
            raise NotAPartition(f"stop {s} is not a customer index (1..{inst.n})")
    vt = inst.fleet[route.vehicle_type]
    load = route_load(inst, route.stops)
    if load > vt.capacity + LOAD_EPS:
        raise CapacityViolation(
            f"route {list(route.stops)} carries {load:.6g} > capacity {vt.capacity:.6g} of type {route.vehicle_type}"
        )
    return vt.fixed_cost, vt.unit_cost * tour_length(inst, route.stops)


def _partition_problems(inst: Instance, sol: Solution) -> list[tuple[int, int]]:
    counts = [0] * (inst.n + 1)
    for r in sol.routes:
        for s in r.stops:
            if 1 <= s <= inst.n:
                counts[s] += 1
    return [(i, counts[i]) for i in range(1, inst.n + 1) if counts[i] != 1]


def evaluate_solution(inst: Instance, sol: Solution) -> float:
    bad = _partition_problems(inst, sol)
    if bad:
        desc = ", ".join(f"customer {i} visited {c}x" for i, c in bad[:5])
        raise NotAPartition(f"solution is not a partition of the customers: {desc}")
    terms = []
    for r in sol.routes:
        terms.extend(route_cost(inst, r))
    return math.fsum(terms)


class Violation(NamedTuple):
    kind: str  # "visit-count" | "capacity" | "structure"
    detail: str
    route: int | None = None
    customer: int | None = None


def validate_solution(inst: Instance, sol: Solution) -> list[Violation]:
    out: list[Violation] = []
    for ri, r in enumerate(sol.routes):
        stops = tuple(r.stops) if hasattr(r, "stops") else ()
        if len(stops) == 0:
            out.append(Violation("structure", "empty route", route=ri))
            continue
        if not 0 <= r.vehicle_type < inst.num_types:
            out.append(Violation("structure", f"unknown vehicle type {r.vehicle_type}", route=ri))
        for s in stops:
            if not 1 <= s <= inst.n:
                out.append(Violation("structure", f"stop {s} is not a customer", route=ri, customer=s))
        if len(set(stops)) != len(stops):
            out.append(Violation("structure", "customer repeated within route", route=ri))
        if 0 <= r.vehicle_type < inst.num_types:
            valid = [s for s in stops if 1 <= s <= inst.n]
            load = route_load(inst, valid)
            cap = inst.fleet[r.vehicle_type].capacity
            if load > cap + LOAD_EPS:
                out.append(Violation("capacity", f"load {load:.6g} exceeds capacity {cap:.6g}", route=ri))
    for i, c in _partition_problems(inst, sol):
        out.append(Violation("visit-count", f"customer {i} visited {c} times", customer=i))
    return out


def cheapest_type(inst: Instance, stops: Sequence[int], length: float | None = None) -> tuple[int, float]:
    """Min-cost feasible vehicle type for a fixed stop sequence -> (type_id, cost).

    Returns ``(-1, inf)`` if the load fits no type.
    """
    if length is None:
        length = tour_length(inst, stops)
    load = route_load(inst, stops)
    best_k, best = -1, math.inf
    for vt in inst.fleet:
        if load <= vt.capacity + LOAD_EPS:
            c = vt.fixed_cost + vt.unit_cost * length
            if c < best:
                best_k, best = vt.type_id, c
    return best_k, best
