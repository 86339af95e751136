"""Tabu search over relocate, swap, 2-opt and change-vehicle-type moves.

Routes carry a stable id so tabu attributes survive re-indexing. Moving
customer c out of route r makes (c, r) tabu, i.e. c may not return to r for
``tenure`` iterations; changing route r away from type k makes (r, k) tabu, and
while it is, later moves on r do not re-type it back to k.
A tabu move is still admissible when it produces a new global best.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..instance import Instance, Solution
from .common import INF, Budget, BudgetedConfig, Problem, polish, savings_routes

MOVES = ("relocate", "swap", "2opt", "type")


@dataclass(frozen=True)
class TabuConfig:
    budget: BudgetedConfig = field(default_factory=lambda: BudgetedConfig(max_iterations=1000))
    tenure: int | None = None          # default ceil(sqrt(n))
    moves: tuple[str, ...] = MOVES
    sample_above: int = 50             # customers considered per iteration on larger instances
    aspiration: bool = True
    # long-term memory: non-improving moves of often-moved customers pay
    # penalty * (cost per customer) * (share of iterations the customer moved)
    frequency_penalty: float = 20.0
    # after this many iterations without a new best, re-split the best
    # solution's routes and restart from the result if it is cheaper
    stall: int | None = 100

    def __post_init__(self):
        if self.frequency_penalty < 0:
            raise ValueError("frequency_penalty must be >= 0")
        if self.tenure is not None and self.tenure < 1:
            raise ValueError("tenure must be >= 1")
        for m in self.moves:
            if m not in MOVES:
                raise ValueError(f"unknown move family {m!r}")
        if not self.moves:
            raise ValueError("need at least one move family")


class _R:
    __slots__ = ("uid", "stops", "k", "load", "length", "cost")

    def __init__(self, p, uid, stops, k=None, banned=()):
        self.uid = uid
        self.stops = stops
        self.load = p.load(stops)
        self.length = p.length(stops)
        if k is None:
            self.cost, self.k = _best_allowed(p, self.load, self.length, banned)
        else:
            self.k = k
            self.cost = p.type_cost(k, self.load, self.length)


def _best_allowed(p, load, length, banned):
    """Cheapest feasible type that is not tabu for the route (any type if all are)."""
    if banned:
        best, bk = INF, -1
        for cap, f, c, k in p.types:
            if load <= cap and k not in banned:
                v = f + c * length
                if v < best:
                    best, bk = v, k
        if bk >= 0:
            return best, bk
    return p.best_type(load, length)


def _cheapest_insert(d, st, c):
    best_inc, best_pos = INF, 0
    prev = 0
    for pos in range(len(st) + 1):
        nxt = st[pos] if pos < len(st) else 0
        inc = d[prev][c] + d[c][nxt] - d[prev][nxt]
        if inc < best_inc:
            best_inc, best_pos = inc, pos
        prev = nxt
    return best_inc, best_pos


def _length_without(d, st, idx):
    a = st[idx - 1] if idx > 0 else 0
    b = st[idx + 1] if idx + 1 < len(st) else 0
    c = st[idx]
    return -d[a][c] - d[c][b] + d[a][b]


def neighbourhood(p: Problem, routes: list[_R], customers, moves, banned):
    """Yield (delta, kind, payload, attrs) for every move; attrs are the tabu
    attributes the move would touch. ``banned(route)`` gives the types the
    route may not be re-typed to right now."""
    d = p.d
    where = {}
    for ri, r in enumerate(routes):
        for idx, s in enumerate(r.stops):
            where[s] = (ri, idx)
    bans = [banned(r) for r in routes]

    def cost(ri, load, length):
        return _best_allowed(p, load, length, bans[ri])[0]

    if "relocate" in moves:
        for c in customers:
            ri, idx = where[c]
            src = routes[ri]
            rest_len = src.length + _length_without(d, src.stops, idx)
            src_new = cost(ri, src.load - p.dem[c], rest_len) if len(src.stops) > 1 else 0.0
            src_delta = src_new - src.cost
            for rj, dst in enumerate(routes):
                if rj == ri:
                    continue
                load = dst.load + p.dem[c]
                if load > p.max_cap:
                    continue
                inc, pos = _cheapest_insert(d, dst.stops, c)
                delta = src_delta + cost(rj, load, dst.length + inc) - dst.cost
                yield delta, "relocate", (c, ri, rj, pos), ((c, dst.uid),)
            if len(src.stops) > 1:
                delta = src_delta + p.best_type(p.dem[c], 2 * d[0][c])[0]
                yield delta, "relocate", (c, ri, -1, 0), ()
    if "swap" in moves:
        cs = sorted(customers)
        for a_i, a in enumerate(cs):
            ra, ia = where[a]
            for b in cs[a_i + 1:]:
                rb, ib = where[b]
                if ra == rb:
                    continue
                A, B = routes[ra], routes[rb]
                la = A.load - p.dem[a] + p.dem[b]
                lb = B.load - p.dem[b] + p.dem[a]
                if la > p.max_cap or lb > p.max_cap:
                    continue
                sa = list(A.stops)
                sa[ia] = b
                sb = list(B.stops)
                sb[ib] = a
                delta = cost(ra, la, p.length(sa)) + cost(rb, lb, p.length(sb)) - A.cost - B.cost
                yield delta, "swap", (a, ra, b, rb), ((a, B.uid), (b, A.uid))
    if "2opt" in moves:
        # improving reversals only, so 2-opt cannot cycle and needs no attribute
        for ri, r in enumerate(routes):
            st = r.stops
            m = len(st)
            if m < 3:
                continue
            path = [0] + st + [0]
            for i in range(1, m):
                for j in range(i + 1, m + 1):
                    gain = (d[path[i - 1]][path[j]] + d[path[i]][path[j + 1]]
                            - d[path[i - 1]][path[i]] - d[path[j]][path[j + 1]])
                    if gain < -1e-12:
                        yield cost(ri, r.load, r.length + gain) - r.cost, "2opt", (ri, i - 1, j - 1), ()
    if "type" in moves:
        for ri, r in enumerate(routes):
            for k in range(len(p.types)):
                if k == r.k:
                    continue
                c = p.type_cost(k, r.load, r.length)
                if c < INF:
                    yield c - r.cost, "type", (ri, k), (("type", r.uid, k),)


def tabu_solve(inst: Instance, cfg: TabuConfig = TabuConfig(), history: list | None = None) -> Solution:
    """Best-admissible-neighbour descent; structural moves re-type the routes
    they touch to the cheapest type that is not tabu for them."""
    p = Problem(inst)
    rng = random.Random(cfg.budget.seed)
    budget = Budget(cfg.budget)
    tenure = cfg.tenure or math.ceil(math.sqrt(p.n))
    routes = [_R(p, i, r) for i, r in enumerate(savings_routes(p))]
    next_uid = len(routes)
    cur_cost = sum(r.cost for r in routes)
    best = [(list(r.stops), r.k) for r in routes]
    best_cost = cur_cost
    tabu: dict = {}
    all_customers = list(range(1, p.n + 1))
    K = len(p.types)
    moved = [0] * (p.n + 1)
    last_best = 0
    while not budget.exhausted():
        it = budget.iterations

        def banned(r):
            return {k for k in range(K) if tabu.get(("type", r.uid, k), -1) >= it}

        customers = all_customers
        if p.n > cfg.sample_above:
            customers = sorted(rng.sample(all_customers, cfg.sample_above))
        chosen = None
        scale = cfg.frequency_penalty * cur_cost / p.n / (it + 1)
        for delta, kind, payload, attrs in neighbourhood(p, routes, customers, cfg.moves, banned):
            if kind == "swap" and len(routes[payload[1]].stops) == 1 and len(routes[payload[3]].stops) == 1:
                continue  # relabels two single-stop routes: same solution, and it cycles
            is_tabu = any(tabu.get(a, -1) >= it for a in attrs)
            if is_tabu and not (cfg.aspiration and cur_cost + delta < best_cost - 1e-12):
                continue
            score = delta
            if delta >= 0 and kind in ("relocate", "swap"):
                score += scale * (moved[payload[0]] + (moved[payload[2]] if kind == "swap" else 0))
            if chosen is None or score < chosen[0] - 1e-12:
                chosen = (score, kind, payload)
        if chosen is None:
            break
        _, kind, payload = chosen
        if kind in ("relocate", "swap"):
            moved[payload[0]] += 1
            if kind == "swap":
                moved[payload[2]] += 1

        def rebuilt(r, stops):
            return _R(p, r.uid, stops, banned=banned(r))

        if kind == "relocate":
            c, ri, rj, pos = payload
            src = routes[ri]
            tabu[(c, src.uid)] = it + tenure
            src_stops = [s for s in src.stops if s != c]
            if rj == -1:
                routes.append(_R(p, next_uid, [c]))
                next_uid += 1
            else:
                st = list(routes[rj].stops)
                st.insert(pos, c)
                routes[rj] = rebuilt(routes[rj], st)
            routes[ri] = rebuilt(src, src_stops) if src_stops else None
        elif kind == "swap":
            a, ra, b, rb = payload
            A, B = routes[ra], routes[rb]
            tabu[(a, A.uid)] = it + tenure
            tabu[(b, B.uid)] = it + tenure
            routes[ra] = rebuilt(A, [b if s == a else s for s in A.stops])
            routes[rb] = rebuilt(B, [a if s == b else s for s in B.stops])
        elif kind == "2opt":
            ri, i, j = payload
            r = routes[ri]
            routes[ri] = rebuilt(r, r.stops[:i] + r.stops[i:j + 1][::-1] + r.stops[j + 1:])
        else:
            ri, k = payload
            r = routes[ri]
            tabu[("type", r.uid, r.k)] = it + tenure
            routes[ri] = _R(p, r.uid, r.stops, k)
        routes = [r for r in routes if r is not None]
        cur_cost = sum(r.cost for r in routes)
        if cur_cost < best_cost - 1e-12:
            best_cost = cur_cost
            best = [(list(r.stops), r.k) for r in routes]
            last_best = it
        elif cfg.stall is not None and it - last_best >= cfg.stall:
            last_best = it
            split, split_cost = polish(p, [r for r, _ in best], best_cost)
            if split_cost < best_cost - 1e-12:
                routes = []
                for r in split:
                    routes.append(_R(p, next_uid, r))
                    next_uid += 1
                cur_cost = best_cost = sum(r.cost for r in routes)
                best = [(list(r.stops), r.k) for r in routes]
        budget.tick()
        if history is not None:
            history.append(best_cost)
    return p.to_solution([r for r, _ in best], [k for _, k in best])
