"""Adaptive large neighbourhood search with simulated-annealing acceptance."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..instance import Instance, Solution
from .common import INF, Budget, BudgetedConfig, Problem, polish, savings_routes

DESTROY_OPS = ("random", "related", "worst")
REPAIR_OPS = ("greedy", "regret2")


@dataclass(frozen=True)
class AlnsConfig:
    budget: BudgetedConfig = field(default_factory=BudgetedConfig)
    destroy_ops: tuple[str, ...] = DESTROY_OPS
    repair_ops: tuple[str, ...] = REPAIR_OPS
    removal_fraction: tuple[float, float] = (0.1, 0.4)
    # new global best, improves current, accepted but worse
    scores: tuple[float, float, float] = (33.0, 9.0, 13.0)
    reaction: float = 0.1
    segment: int = 100
    start_accept_fraction: float = 0.05  # this fraction of the start cost is accepted with p = 0.5
    cooling: float = 0.9997
    shaw_power: float = 6.0
    worst_power: float = 3.0
    # re-split the routes, concatenated by polar angle, after every repair; lets
    # the search merge several small-vehicle routes into one larger vehicle,
    # which single insertions cannot do when the merge pays off only as a whole
    split_polish: bool = True

    def __post_init__(self):
        lo, hi = self.removal_fraction
        if not (0 < lo <= hi < 1):
            raise ValueError("removal_fraction must satisfy 0 < lo <= hi < 1")
        if any(s < 0 for s in self.scores):
            raise ValueError("operator scores must be nonnegative")
        if not 0 <= self.reaction <= 1:
            raise ValueError("reaction factor must lie in [0, 1]")
        if not 0 < self.cooling <= 1:
            raise ValueError("cooling rate must lie in (0, 1]")
        if self.segment < 1:
            raise ValueError("segment length must be >= 1")
        for op in self.destroy_ops:
            if op not in DESTROY_OPS:
                raise ValueError(f"unknown destroy operator {op!r}")
        for op in self.repair_ops:
            if op not in REPAIR_OPS:
                raise ValueError(f"unknown repair operator {op!r}")
        if not self.destroy_ops or not self.repair_ops:
            raise ValueError("need at least one destroy and one repair operator")


class _Weights:
    def __init__(self, names, reaction):
        self.names = list(names)
        self.w = [1.0 / len(names)] * len(names)
        self.score = [0.0] * len(names)
        self.uses = [0] * len(names)
        self.reaction = reaction

    def pick(self, rng: random.Random) -> int:
        return rng.choices(range(len(self.w)), weights=self.w)[0]

    def credit(self, i: int, s: float):
        self.score[i] += s
        self.uses[i] += 1

    def end_segment(self):
        r = self.reaction
        for i in range(len(self.w)):
            if self.uses[i]:
                self.w[i] = (1 - r) * self.w[i] + r * self.score[i] / self.uses[i]
        tot = sum(self.w)
        if tot > 0:
            self.w = [x / tot for x in self.w]
        else:
            self.w = [1.0 / len(self.w)] * len(self.w)
        self.score = [0.0] * len(self.w)
        self.uses = [0] * len(self.w)


# -- destroy ------------------------------------------------------------------

def _remove(routes, victims):
    vs = set(victims)
    return [[s for s in r if s not in vs] for r in routes]


def destroy_random(p, routes, q, rng, cfg):
    custs = [s for r in routes for s in r]
    return rng.sample(custs, q)


def destroy_related(p, routes, q, rng, cfg):
    d, dem = p.d, p.dem
    where = {s: i for i, r in enumerate(routes) for s in r}
    dmax = max(max(row) for row in d) or 1.0
    qmax = max(dem) or 1.0
    removed = [rng.choice(list(where))]
    left = [s for s in where if s != removed[0]]
    while len(removed) < q:
        r = rng.choice(removed)

        def rel(s):
            return d[r][s] / dmax + abs(dem[r] - dem[s]) / qmax + (0.0 if where[s] == where[r] else 0.5)

        left.sort(key=lambda s: (rel(s), s))
        pick = left[int(rng.random() ** cfg.shaw_power * len(left))]
        removed.append(pick)
        left.remove(pick)
    return removed


def destroy_worst(p, routes, q, rng, cfg):
    routes = [list(r) for r in routes]
    removed = []
    while len(removed) < q:
        gains = []
        for r in routes:
            if not r:
                continue
            base = p.route_cost(r)
            for idx, s in enumerate(r):
                gains.append((base - p.route_cost(r[:idx] + r[idx + 1:]), s))
        gains.sort(key=lambda g: (-g[0], g[1]))
        s = gains[int(rng.random() ** cfg.worst_power * len(gains))][1]
        removed.append(s)
        for r in routes:
            if s in r:
                r.remove(s)
                break
    return removed


# -- repair -------------------------------------------------------------------

class _RouteInfo:
    __slots__ = ("stops", "load", "length", "cost")

    def __init__(self, p, stops):
        self.stops = stops
        self.load = p.load(stops)
        self.length = p.length(stops)
        self.cost = p.best_type(self.load, self.length)[0] if stops else 0.0


def _best_insertions(p, infos, c):
    """Per route: (delta, route index, position) of the cheapest insertion of c.

    A fresh route is the last option (route index len(infos)).
    """
    d, dc = p.d, p.d[c]
    out = []
    for ri, info in enumerate(infos):
        load = info.load + p.dem[c]
        if load > p.max_cap:
            continue
        st = info.stops
        best_inc, best_pos = INF, -1
        prev = 0
        for pos in range(len(st) + 1):
            nxt = st[pos] if pos < len(st) else 0
            inc = d[prev][c] + dc[nxt] - d[prev][nxt]
            if inc < best_inc:
                best_inc, best_pos = inc, pos
            prev = nxt
        cost, _ = p.best_type(load, info.length + best_inc)
        out.append((cost - info.cost, ri, best_pos))
    cost, _ = p.best_type(p.dem[c], 2 * dc[0])
    out.append((cost, len(infos), 0))
    return out


def _insert(p, infos, c, ri, pos):
    if ri == len(infos):
        infos.append(_RouteInfo(p, [c]))
    else:
        st = list(infos[ri].stops)
        st.insert(pos, c)
        infos[ri] = _RouteInfo(p, st)


def repair_greedy(p, routes, removed, rng):
    infos = [_RouteInfo(p, list(r)) for r in routes if r]
    pending = list(removed)
    while pending:
        best = None
        for c in pending:
            delta, ri, pos = min(_best_insertions(p, infos, c))
            if best is None or delta < best[0]:
                best = (delta, c, ri, pos)
        _, c, ri, pos = best
        _insert(p, infos, c, ri, pos)
        pending.remove(c)
    return [i.stops for i in infos]


def repair_regret2(p, routes, removed, rng):
    infos = [_RouteInfo(p, list(r)) for r in routes if r]
    pending = list(removed)
    while pending:
        best = None
        for c in pending:
            opts = sorted(_best_insertions(p, infos, c))
            regret = opts[1][0] - opts[0][0] if len(opts) > 1 else INF
            key = (regret, -opts[0][0])
            if best is None or key > best[0]:
                best = (key, c, opts[0][1], opts[0][2])
        _, c, ri, pos = best
        _insert(p, infos, c, ri, pos)
        pending.remove(c)
    return [i.stops for i in infos]


_DESTROY = {"random": destroy_random, "related": destroy_related, "worst": destroy_worst}
_REPAIR = {"greedy": repair_greedy, "regret2": repair_regret2}


def alns_solve(inst: Instance, cfg: AlnsConfig = AlnsConfig(), history: list | None = None) -> Solution:
    """Best solution found within the budget. ``history`` (if given) receives
    the best-so-far cost after every iteration."""
    p = Problem(inst)
    rng = random.Random(cfg.budget.seed)
    budget = Budget(cfg.budget)
    cur = savings_routes(p)
    cur_cost = p.total(cur)
    best, best_cost = [list(r) for r in cur], cur_cost
    if inst.n < 2:
        return p.to_solution(best)
    T = cfg.start_accept_fraction * cur_cost / math.log(2) if cur_cost > 0 else 1e-9
    dw, rw = _Weights(cfg.destroy_ops, cfg.reaction), _Weights(cfg.repair_ops, cfg.reaction)
    lo, hi = cfg.removal_fraction
    q_lo = max(1, math.floor(lo * p.n))
    q_hi = max(q_lo, min(p.n, math.ceil(hi * p.n)))
    s1, s2, s3 = cfg.scores
    seen = {_key(cur)}
    while not budget.exhausted():
        di, ri = dw.pick(rng), rw.pick(rng)
        q = rng.randint(q_lo, q_hi)
        removed = _DESTROY[dw.names[di]](p, cur, q, rng, cfg)
        cand = [r for r in _REPAIR[rw.names[ri]](p, _remove(cur, removed), removed, rng) if r]
        cand_cost = p.total(cand)
        if cfg.split_polish:
            cand, cand_cost = polish(p, cand, cand_cost)
        score = 0.0
        k = _key(cand)
        fresh = k not in seen
        if cand_cost < best_cost - 1e-12:
            best, best_cost = [list(r) for r in cand], cand_cost
            cur, cur_cost = cand, cand_cost
            score = s1
        elif cand_cost < cur_cost - 1e-12:
            cur, cur_cost = cand, cand_cost
            score = s2 if fresh else 0.0
        elif T > 0 and rng.random() < math.exp(-(cand_cost - cur_cost) / T):
            cur, cur_cost = cand, cand_cost
            score = s3 if fresh else 0.0
        seen.add(k)
        dw.credit(di, score)
        rw.credit(ri, score)
        T *= cfg.cooling
        budget.tick()
        if budget.iterations % cfg.segment == 0:
            dw.end_segment()
            rw.end_segment()
        if history is not None:
            history.append(best_cost)
    return p.to_solution(best)


def _key(routes):
    return tuple(sorted(tuple(r) for r in routes if r))
