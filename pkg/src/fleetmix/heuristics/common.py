"""Shared pieces of the classical solvers: budgets, fast route costing, the
savings start and the fleet-mix split.

Internally a solution is a list of routes, each a list of customer indices.
Every route is costed on its cheapest feasible vehicle type; the conversion to
:class:`~fleetmix.instance.Solution` happens once at the end.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

from ..errors import Infeasible
from ..instance import LOAD_EPS, Instance, Route, Solution

INF = math.inf


@dataclass(frozen=True)
class BudgetedConfig:
    time_limit_seconds: float | None = 60.0
    max_iterations: int | None = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.time_limit_seconds is None and self.max_iterations is None:
            raise ValueError("set a time limit, an iteration cap, or both")
        if self.time_limit_seconds is not None and self.time_limit_seconds < 0:
            raise ValueError("time_limit_seconds must be >= 0")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


class Budget:
    def __init__(self, cfg: BudgetedConfig):
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.iterations = 0

    def exhausted(self) -> bool:
        c = self.cfg
        if c.max_iterations is not None and self.iterations >= c.max_iterations:
            return True
        return c.time_limit_seconds is not None and time.perf_counter() - self.t0 >= c.time_limit_seconds

    def tick(self):
        self.iterations += 1


class Problem:
    """Plain-Python view of an instance for tight inner loops."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.n = inst.n
        self.d = inst.dist_rows
        self.dem = [0.0] + [c.demand for c in inst.customers]
        # (capacity + eps, fixed, unit, type_id)
        self.types = [(v.capacity + LOAD_EPS, v.fixed_cost, v.unit_cost, v.type_id) for v in inst.fleet]
        self.max_cap = max(t[0] for t in self.types)
        for i in range(1, self.n + 1):
            if self.dem[i] > self.max_cap:
                raise Infeasible(f"customer {i} demand {self.dem[i]} fits no vehicle type")

    def best_type(self, load: float, length: float) -> tuple[float, int]:
        """(cost, type) of the cheapest type carrying ``load``; (inf, -1) if none."""
        best, bk = INF, -1
        for cap, f, c, k in self.types:
            if load <= cap:
                v = f + c * length
                if v < best:
                    best, bk = v, k
        return best, bk

    def type_cost(self, k: int, load: float, length: float) -> float:
        cap, f, c, _ = self.types[k]
        return f + c * length if load <= cap else INF

    def length(self, stops) -> float:
        d = self.d
        prev, total = 0, 0.0
        for s in stops:
            total += d[prev][s]
            prev = s
        return total + d[prev][0]

    def load(self, stops) -> float:
        dem = self.dem
        return sum(dem[s] for s in stops)

    def route_cost(self, stops) -> float:
        if not stops:
            return 0.0
        return self.best_type(self.load(stops), self.length(stops))[0]

    def total(self, routes) -> float:
        return sum(self.route_cost(r) for r in routes)

    def to_solution(self, routes, types=None) -> Solution:
        """Routes (with optional explicit types) -> exactly evaluated Solution."""
        out = []
        for i, r in enumerate(routes):
            if not r:
                continue
            k = types[i] if types is not None else self.best_type(self.load(r), self.length(r))[1]
            out.append(Route(k, tuple(r)))
        return Solution.from_routes(self.inst, out)


def routes_of(sol: Solution) -> list[list[int]]:
    return [list(r.stops) for r in sol.routes]


def retype(inst: Instance, sol: Solution) -> Solution:
    """Put every route on its min-cost feasible type (never increases cost)."""
    p = Problem(inst)
    return p.to_solution(routes_of(sol))


def initial_solution(inst: Instance) -> Solution:
    """Savings construction for heterogeneous fixed + variable costs.

    Start from one route per customer on its cheapest type, then walk the
    savings list (largest first) and join two route ends whenever the merged
    route fits some type and the cheapest typing of the merge costs less than
    the two routes it replaces.
    """
    p = Problem(inst)
    return p.to_solution(savings_routes(p))


def savings_routes(p: Problem) -> list[list[int]]:
    d, n = p.d, p.n
    route_of = {i: [i] for i in range(1, n + 1)}
    info = {id(r): (p.dem[r[0]], 2 * d[0][r[0]]) for r in route_of.values()}
    pairs = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            pairs.append((-(d[0][i] + d[0][j] - d[i][j]), i, j))
    pairs.sort()
    for neg_s, i, j in pairs:
        ri, rj = route_of[i], route_of[j]
        if ri is rj:
            continue
        # i and j must sit at route ends; orient so the join is ...i + j...
        if ri[-1] == i:
            a = ri
        elif ri[0] == i:
            a = ri[::-1]
        else:
            continue
        if rj[0] == j:
            b = rj
        elif rj[-1] == j:
            b = rj[::-1]
        else:
            continue
        la, lena = info[id(ri)]
        lb, lenb = info[id(rj)]
        load = la + lb
        if load > p.max_cap:
            continue
        length = lena + lenb + neg_s
        merged_cost, _ = p.best_type(load, length)
        if merged_cost < p.best_type(la, lena)[0] + p.best_type(lb, lenb)[0]:
            m = a + b
            del info[id(ri)], info[id(rj)]
            info[id(m)] = (load, length)
            for s in m:
                route_of[s] = m
    seen, routes = set(), []
    for i in range(1, n + 1):
        r = route_of[i]
        if id(r) not in seen:
            seen.add(id(r))
            routes.append(r)
    return routes


def split_tour(p: Problem, tour) -> tuple[float, list[list[int]], list[int]]:
    """Optimal cut points and types along a giant tour -> (cost, routes, types).

    Shortest path on the break-point DAG: arc (i, j) serves tour[i:j] as one
    route on its cheapest feasible type. Ties keep the earlier predecessor.
    """
    d, dem = p.d, p.dem
    m = len(tour)
    V = [INF] * (m + 1)
    pred = [-1] * (m + 1)
    ptype = [-1] * (m + 1)
    V[0] = 0.0
    max_cap = p.max_cap
    for i in range(m):
        if V[i] == INF:
            continue
        load, inner = 0.0, 0.0
        first = tour[i]
        prev = first
        for j in range(i, m):
            s = tour[j]
            load += dem[s]
            if load > max_cap:
                break
            if j > i:
                inner += d[prev][s]
            prev = s
            cost, k = p.best_type(load, d[0][first] + inner + d[s][0])
            v = V[i] + cost
            if v < V[j + 1]:
                V[j + 1], pred[j + 1], ptype[j + 1] = v, i, k
    if V[m] == INF:
        raise Infeasible("tour cannot be split into feasible routes")
    routes, types = [], []
    j = m
    while j > 0:
        i = pred[j]
        routes.append(list(tour[i:j]))
        types.append(ptype[j])
        j = i
    routes.reverse()
    types.reverse()
    return V[m], routes, types


def polish(p: Problem, routes, cost):
    """Split the angle-ordered concatenation of the routes; keep it if cheaper."""
    xy = p.inst.coords
    x0, y0 = xy[0]

    def angle(r):
        cx = sum(xy[s][0] for s in r) / len(r)
        cy = sum(xy[s][1] for s in r) / len(r)
        return math.atan2(cy - y0, cx - x0)

    order = sorted(routes, key=lambda r: (angle(r), r))
    v, split, _ = split_tour(p, [s for r in order for s in r])
    if v < cost - 1e-12:
        return split, p.total(split)
    return routes, cost


def fleet_mix_split(tour, inst: Instance) -> Solution:
    """Optimal segmentation and typing of a fixed customer order."""
    tour = [int(s) for s in tour]
    if sorted(tour) != list(range(1, inst.n + 1)):
        raise ValueError("tour must be a permutation of the customers 1..n")
    p = Problem(inst)
    _, routes, types = split_tour(p, tour)
    return p.to_solution(routes, types)


def giant_tour(sol: Solution) -> list[int]:
    return [s for r in sol.routes for s in r.stops]
