"""Random FSMVRP instances on the unit square.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence([seed, stream])``,
one independent stream per draw category:

    stream 0 (coords): depot (x, y), then customers (x, y) in index order
    stream 1 (demand): customer demands in index order
    stream 2 (fleet):  type count, f_sta, then per type (Q, c, f_sta^k draw)

Adding a category later means adding a stream id, which leaves the others
untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .instance import Instance

STREAM_COORDS = 0
STREAM_DEMANDS = 1
STREAM_FLEET = 2


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 20
    type_count_range: tuple[int, int] = (3, 6)
    seed: int = 0
    demand_range: tuple[float, float] = (0.01, 0.5)
    capacity_range: tuple[float, float] = (0.5, 3.0)
    f_sta_range: tuple[float, float] = (1.0, 20.0)
    unit_cost_range: tuple[float, float] = (1.0, 3.0)
    factor_spread: float = 1.0
    factor_floor: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        for name in ("type_count_range", "demand_range", "capacity_range", "f_sta_range", "unit_cost_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} > upper bound {hi}")
        if self.type_count_range[0] < 1:
            raise ValueError("need at least one vehicle type")

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return replace(self, seed=seed)


def stream(seed: int, category: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, category])))


def specific_factor(f_sta_k: float, floor: float = 1.0) -> float:
    """Per-type fixed-cost factor, clamped below."""
    return max(f_sta_k, floor)


def generate_instance(cfg: GeneratorConfig, name: str | None = None) -> Instance:
    rng = stream(cfg.seed, STREAM_COORDS)
    depot = rng.random(2)
    xy = rng.random((cfg.n, 2))

    rng = stream(cfg.seed, STREAM_DEMANDS)
    demands = rng.uniform(cfg.demand_range[0], cfg.demand_range[1], size=cfg.n)

    rng = stream(cfg.seed, STREAM_FLEET)
    lo, hi = cfg.type_count_range
    num_types = int(rng.integers(lo, hi + 1))
    f_sta = rng.uniform(*cfg.f_sta_range)
    caps, fixed, unit = [], [], []
    for _ in range(num_types):
        q = rng.uniform(*cfg.capacity_range)
        c = rng.uniform(*cfg.unit_cost_range)
        fk = specific_factor(rng.uniform(f_sta - cfg.factor_spread, f_sta + cfg.factor_spread), cfg.factor_floor)
        caps.append(q)
        unit.append(c)
        fixed.append(fk * q)
    return Instance.from_arrays(depot, xy, demands, caps, fixed, unit, name=name or f"rand-n{cfg.n}-s{cfg.seed}")


def generate_batch(cfg: GeneratorConfig, count: int, first_seed: int | None = None) -> list[Instance]:
    """``count`` instances with consecutive seeds starting at ``first_seed`` (default cfg.seed)."""
    s0 = cfg.seed if first_seed is None else first_seed
    return [generate_instance(cfg.with_seed(s0 + i)) for i in range(count)]
