"""Exact oracle for small instances and LP export of the MILP.

The oracle solves a TSP for every load-feasible customer subset by Held-Karp,
prices each subset on its cheapest feasible type, then finds the optimal
partition of the customers with a DP over subsets (3^n submask walk).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import Infeasible, TooLarge
from .instance import LOAD_EPS, Instance, Route, Solution, evaluate_solution

INF = math.inf


@dataclass(frozen=True)
class OracleLimit:
    # 12 keeps the subset tables at a few hundred MB worst case; 14 is the hard ceiling
    max_n: int = 12

    def __post_init__(self):
        if not 1 <= self.max_n <= 14:
            raise ValueError("max_n must lie in [1, 14]")


def held_karp(inst: Instance, feasible=None) -> tuple[list[float], list[tuple[int, ...] | None]]:
    """Optimal closed-tour length and stop order for every customer subset.

    Bit b of a mask stands for customer b+1. ``feasible[mask]`` (optional)
    prunes subsets; supersets of pruned subsets must be pruned too.
    Returns (tsp, tour) lists indexed by mask; pruned entries hold inf / None.
    """
    n = inst.n
    d = inst.dist_rows
    N = 1 << n
    dp: list[list[float] | None] = [None] * N
    par: list[list[int] | None] = [None] * N
    tsp = [INF] * N
    tsp[0] = 0.0
    tour: list[tuple[int, ...] | None] = [None] * N
    tour[0] = ()
    bits = [[j for j in range(n) if m >> j & 1] for m in range(N)]
    for mask in range(1, N):
        if feasible is not None and not feasible[mask]:
            continue
        members = bits[mask]
        row = [INF] * n
        prow = [-1] * n
        if len(members) == 1:
            j = members[0]
            row[j] = d[0][j + 1]
        else:
            for j in members:
                prev = dp[mask ^ (1 << j)]
                dj = d[j + 1]
                best, bi = INF, -1
                for i in bits[mask ^ (1 << j)]:
                    v = prev[i] + dj[i + 1]
                    if v < best:
                        best, bi = v, i
                row[j], prow[j] = best, bi
        dp[mask], par[mask] = row, prow
        best, bj = INF, -1
        for j in members:
            v = row[j] + d[j + 1][0]
            if v < best:
                best, bj = v, j
        tsp[mask] = best
        # walk parents back to the first stop
        seq, m, j = [], mask, bj
        while j != -1:
            seq.append(j + 1)
            pj = par[m][j]
            m ^= 1 << j
            j = pj
        tour[mask] = tuple(reversed(seq))
    return tsp, tour


def subset_loads(inst: Instance) -> list[float]:
    n = inst.n
    dem = [c.demand for c in inst.customers]
    loads = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        low = (mask & -mask).bit_length() - 1
        loads[mask] = loads[mask & (mask - 1)] + dem[low]
    return loads


def exact_solve(inst: Instance, limit: OracleLimit = OracleLimit()) -> Solution:
    """Provably optimal solution; ties go to fewer routes, then to the first
    subset met in the submask enumeration."""
    n = inst.n
    if n > limit.max_n:
        raise TooLarge(f"exact oracle handles n <= {limit.max_n}, instance has n = {n}")
    caps = [v.capacity + LOAD_EPS for v in inst.fleet]
    max_cap = max(caps)
    for c in inst.customers:
        if c.demand > max_cap:
            raise Infeasible(f"demand {c.demand} fits no vehicle type")
    loads = subset_loads(inst)
    feasible = [ld <= max_cap for ld in loads]
    tsp, tour = held_karp(inst, feasible)
    N = 1 << n
    rcost = [INF] * N
    rtype = [-1] * N
    for mask in range(1, N):
        if not feasible[mask]:
            continue
        for v, cap in zip(inst.fleet, caps):
            if loads[mask] <= cap:
                c = v.fixed_cost + v.unit_cost * tsp[mask]
                if c < rcost[mask]:
                    rcost[mask], rtype[mask] = c, v.type_id
    best = [INF] * N
    count = [0] * N
    choice = [0] * N
    best[0] = 0.0
    for S in range(1, N):
        low = S & -S
        rest = S ^ low
        bv, bc, bt = INF, 0, 0
        sub = rest
        while True:
            T = sub | low
            rc = rcost[T]
            if rc < INF:
                v = rc + best[S ^ T]
                c = count[S ^ T] + 1
                if v < bv or (v == bv and c < bc):
                    bv, bc, bt = v, c, T
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[S], count[S], choice[S] = bv, bc, bt
    if best[N - 1] == INF:
        raise Infeasible("no feasible partition")
    routes = []
    S = N - 1
    while S:
        T = choice[S]
        routes.append(Route(rtype[T], tour[T]))
        S ^= T
    routes.sort(key=lambda r: r.stops)
    sol = Solution(tuple(routes))
    return Solution(sol.routes, evaluate_solution(inst, sol))


def check_optimality_certificate(inst: Instance, sol: Solution, limit: OracleLimit = OracleLimit(),
                                 tol: float = 1e-6) -> bool:
    opt = exact_solve(inst, limit).total_cost
    return abs(evaluate_solution(inst, sol) - opt) <= tol


# ---------------------------------------------------------------- LP export

def _num(x: float) -> str:
    return repr(float(x))


def _lines(terms: list[str], per_line: int = 6) -> list[str]:
    return ["   " + " ".join(terms[i:i + per_line]) for i in range(0, len(terms), per_line)]


def _signed(coef: float, var: str) -> str:
    return f"{'-' if coef < 0 else '+'} {_num(abs(coef))} {var}"


def milp_text(inst: Instance) -> str:
    """The MILP in CPLEX LP format with a stable variable order.

    Variables: binaries ``x_k_i_j`` (type k drives i -> j) and continuous
    load variables ``u_k_i``. Rows: visit_j (n), depot_k (|K|), flow_k_j
    (n|K|), mtz_k_i_j (n(n-1)|K|), loadlo_k_i and loadhi_k_i (2n|K|).
    """
    n, K = inst.n, inst.num_types
    d = inst.dist_rows
    dem = [0.0] + [c.demand for c in inst.customers]
    V = range(n + 1)
    N = range(1, n + 1)

    def x(k, i, j):
        return f"x_{k}_{i}_{j}"

    def u(k, i):
        return f"u_{k}_{i}"

    out = [f"\\ FSMVRP {inst.name}: n={n} types={K}", "Minimize"]
    obj = []
    for k, v in enumerate(inst.fleet):
        for i in V:
            for j in V:
                if i != j:
                    coef = v.unit_cost * d[i][j] + (v.fixed_cost if i == 0 else 0.0)
                    obj.append(_signed(coef, x(k, i, j)))
    out.append(" obj:")
    out += _lines(obj)
    out.append("Subject To")
    for j in N:
        out.append(f" visit_{j}:")
        out += _lines([f"+ {x(k, i, j)}" for k in range(K) for i in V if i != j])
        out.append("   = 1")
    for k in range(K):
        out.append(f" depot_{k}:")
        out += _lines([f"+ {x(k, i, 0)}" for i in N] + [f"- {x(k, 0, j)}" for j in N])
        out.append("   = 0")
    for k in range(K):
        for j in N:
            out.append(f" flow_{k}_{j}:")
            out += _lines([f"+ {x(k, i, j)}" for i in V if i != j] + [f"- {x(k, j, i)}" for i in V if i != j])
            out.append("   = 0")
    for k, v in enumerate(inst.fleet):
        Q = v.capacity
        for i in N:
            for j in N:
                if i != j:
                    out.append(f" mtz_{k}_{i}_{j}: + {u(k, i)} - {u(k, j)} {_signed(Q + dem[j], x(k, i, j))}"
                               f" <= {_num(Q)}")
    for k, v in enumerate(inst.fleet):
        Q = v.capacity
        for i in N:
            into = [x(k, j, i) for j in V if j != i]
            out.append(f" loadlo_{k}_{i}:")
            out += _lines([_signed(dem[i], t) for t in into] + [f"- {u(k, i)}"])
            out.append("   <= 0")
            out.append(f" loadhi_{k}_{i}:")
            out += _lines([f"+ {u(k, i)}"] + [_signed(-Q, t) for t in into])
            out.append("   <= 0")
    out.append("Bounds")
    for k in range(K):
        out.append(f" {u(k, 0)} = 0")
        for i in N:
            out.append(f" {u(k, i)} >= 0")
    out.append("Binaries")
    binaries = [x(k, i, j) for k in range(K) for i in V for j in V if i != j]
    out += _lines(binaries, per_line=8)
    out.append("End")
    return "\n".join(out) + "\n"


def export_milp(inst: Instance, path) -> Path:
    path = Path(path)
    path.write_text(milp_text(inst))
    return path
