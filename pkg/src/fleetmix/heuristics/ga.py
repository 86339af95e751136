"""Genetic algorithm on giant tours, decoded by the fleet-mix split."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..instance import Instance, Solution
from .common import Budget, BudgetedConfig, Problem, savings_routes, split_tour


@dataclass(frozen=True)
class GaConfig:
    # iterations are generations
    budget: BudgetedConfig = field(default_factory=lambda: BudgetedConfig(max_iterations=200))
    population: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    elitism: int = 2
    tournament: int = 2

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        for name in ("crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")
        if self.tournament < 1:
            raise ValueError("tournament size must be >= 1")


def order_crossover(p1: list[int], p2: list[int], rng: random.Random) -> list[int]:
    """OX: keep p1[i:j], fill the rest in p2's order starting after j."""
    m = len(p1)
    i, j = sorted(rng.sample(range(m + 1), 2)) if m > 1 else (0, m)
    child = [None] * m
    child[i:j] = p1[i:j]
    kept = set(p1[i:j])
    fill = [g for g in p2[j:] + p2[:j] if g not in kept]
    pos = j
    for g in fill:
        pos %= m
        child[pos] = g
        pos += 1
    return child


def mutate(tour: list[int], rng: random.Random) -> list[int]:
    t = list(tour)
    if len(t) < 2:
        return t
    i, j = sorted(rng.sample(range(len(t)), 2))
    if rng.random() < 0.5:
        t[i], t[j] = t[j], t[i]
    else:
        t[i:j + 1] = t[i:j + 1][::-1]
    return t


def ga_solve(inst: Instance, cfg: GaConfig = GaConfig(), history: list | None = None) -> Solution:
    p = Problem(inst)
    rng = random.Random(cfg.budget.seed)
    budget = Budget(cfg.budget)
    start = savings_routes(p)
    if budget.exhausted():
        return p.to_solution(start)
    cache: dict[tuple, float] = {}

    def fitness(t):
        key = tuple(t)
        v = cache.get(key)
        if v is None:
            v = cache[key] = split_tour(p, t)[0]
        return v

    seed_tour = [s for r in start for s in r]
    pop = [seed_tour]
    while len(pop) < cfg.population:
        t = list(range(1, p.n + 1))
        rng.shuffle(t)
        pop.append(t)
    fit = [fitness(t) for t in pop]
    best_i = min(range(len(pop)), key=lambda i: (fit[i], i))
    best, best_cost = list(pop[best_i]), fit[best_i]

    def select():
        cand = [rng.randrange(len(pop)) for _ in range(cfg.tournament)]
        return pop[min(cand, key=lambda i: (fit[i], i))]

    while not budget.exhausted():
        order = sorted(range(len(pop)), key=lambda i: (fit[i], i))
        nxt = [pop[i] for i in order[:cfg.elitism]]
        while len(nxt) < cfg.population:
            a, b = select(), select()
            child = order_crossover(a, b, rng) if rng.random() < cfg.crossover_rate else list(a)
            if rng.random() < cfg.mutation_rate:
                child = mutate(child, rng)
            nxt.append(child)
        pop = nxt
        fit = [fitness(t) for t in pop]
        i = min(range(len(pop)), key=lambda i: (fit[i], i))
        if fit[i] < best_cost - 1e-12:
            best, best_cost = list(pop[i]), fit[i]
        budget.tick()
        if history is not None:
            history.append(best_cost)
    if best_cost >= p.total(start) - 1e-12:
        return p.to_solution(start)
    _, routes, types = split_tour(p, best)
    return p.to_solution(routes, types)
