"""Decoding a trained policy: greedy, best-of-k sampling, 8-fold augmentation.

Instances outside the training distribution (coordinates outside the unit
square, large loads or costs) are shown to the network in rescaled units; see
:func:`policy_view`. All scale factors are powers of two, so loads and
capacities compare exactly as in the original instance and every action
sequence stays feasible there. Costs are always reported in original units.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import torch

from .batch_env import InstanceBatch, pow2_ceil
from .env import extract_solution
from .errors import CoordsOutOfRange
from .instance import Customer, Instance, Solution, VehicleType
from .policy import FRIPN
from .rollout import rollout, uniform_streams

# (x, y) -> image, in this order; index 0 is the identity
DIHEDRAL = (
    lambda x, y: (x, y),
    lambda x, y: (y, x),
    lambda x, y: (1 - x, y),
    lambda x, y: (x, 1 - y),
    lambda x, y: (1 - x, 1 - y),
    lambda x, y: (y, 1 - x),
    lambda x, y: (1 - y, x),
    lambda x, y: (1 - y, 1 - x),
)

TRAIN_MAX_CAPACITY = 3.0
TRAIN_MEAN_UNIT_COST = 2.0


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "greedy"
    sample_size: int = 128
    augment: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("greedy", "sampling"):
            raise ValueError(f"strategy must be 'greedy' or 'sampling', got {self.strategy!r}")
        if self.strategy == "sampling" and self.sample_size < 1:
            raise ValueError("sample_size must be >= 1 when sampling")


def in_unit_square(inst: Instance) -> bool:
    xy = inst.coords
    return bool((xy >= 0).all() and (xy <= 1).all())


def policy_view(inst: Instance) -> Instance:
    """Instance as the network should see it (identity for generator-like instances).

    Coordinates are shifted to the origin and divided by a power of two so they
    fit the unit square, loads are divided by a power of two so the largest
    capacity is at most 3, and costs are divided by a power of two so the mean
    per-unit-distance cost in the new length unit is near the training mean.
    """
    xy = inst.coords
    rescale_xy = not in_unit_square(inst)
    max_q = float(inst.capacities.max())
    rescale_load = max_q > TRAIN_MAX_CAPACITY
    if not (rescale_xy or rescale_load):
        return inst
    lo = xy.min(axis=0) if rescale_xy else np.zeros(2)
    s_xy = pow2_ceil(float((xy - lo).max())) if rescale_xy else 1.0
    s_load = pow2_ceil(max_q / TRAIN_MAX_CAPACITY) if rescale_load else 1.0
    s_cost = 1.0
    if rescale_xy:
        s_cost = pow2_ceil(float(inst.unit_costs.mean()) * s_xy / TRAIN_MEAN_UNIT_COST)
    depot = tuple((np.asarray(inst.depot) - lo) / s_xy)
    custs = tuple(Customer((c.x - lo[0]) / s_xy, (c.y - lo[1]) / s_xy, c.demand / s_load) for c in inst.customers)
    fleet = tuple(VehicleType(v.capacity / s_load, v.fixed_cost / s_cost, v.unit_cost * s_xy / s_cost, v.type_id)
                  for v in inst.fleet)
    return Instance(depot, custs, fleet, inst.name + "@view")


def augment_instance(inst: Instance) -> list[Instance]:
    """The 8 symmetric images of a unit-square instance (identity first)."""
    if not in_unit_square(inst):
        raise CoordsOutOfRange(f"{inst.name}: augmentation needs coordinates in [0,1]^2; rescale first")
    out = []
    for t, f in enumerate(DIHEDRAL):
        depot = f(*inst.depot)
        custs = tuple(Customer(*f(c.x, c.y), c.demand) for c in inst.customers)
        out.append(Instance(depot, custs, inst.fleet, f"{inst.name}#aug{t}"))
    return out


def _views(inst: Instance, augment: bool) -> list[Instance]:
    view = policy_view(inst)
    return augment_instance(view) if augment else [view]


def _best(inst: Instance, res, views: int, repeats: int) -> Solution:
    """Exact re-evaluation of every rollout row on the original instance; first minimum wins."""
    n1 = inst.n + 1
    best: Solution | None = None
    # rollout costs agree with exact evaluation to ~1e-15 relative (scaled units
    # are powers of two), so only near-minimal rows need the exact replay
    cost = res.cost.numpy()
    lo = cost.min()
    rows = np.nonzero(cost <= lo + 1e-7 * max(1.0, abs(lo)))[0]
    for row in rows.tolist():
        sol = extract_solution(res.action_pairs(row, n1), inst)
        if best is None or sol.total_cost < best.total_cost:
            best = sol
    return best


@torch.no_grad()
def _decode(inst: Instance, model: FRIPN, mode: str, repeats: int, seed: int, augment: bool) -> Solution:
    """The identity image always runs as its own batch, exactly as without
    augmentation, so augmenting can only add candidates."""
    views = _views(inst, augment)
    u = None
    batches = [views[:1]] + ([views[1:]] if len(views) > 1 else [])
    best, offset = None, 0
    for group in batches:
        if mode == "sample":
            u = uniform_streams(seed, len(group) * repeats, 2 * inst.n, offset=offset)
        res = rollout(model, InstanceBatch.from_instances(group), repeats=repeats, mode=mode, uniforms=u)
        cand = _best(inst, res, len(group), repeats)
        if best is None or cand.total_cost < best.total_cost:
            best = cand
        offset += len(group) * repeats
    return best


def greedy_decode(inst: Instance, model: FRIPN, augment: bool = False) -> Solution:
    return _decode(inst, model, "greedy", 1, 0, augment)


def sample_decode(inst: Instance, model: FRIPN, sample_size: int = 128, seed: int = 0,
                  augment: bool = False) -> Solution:
    """Best of ``sample_size`` sampled episodes (per image when augmenting).

    Sample i of image t draws from the uniform stream ``(seed, t * sample_size + i)``.
    """
    return _decode(inst, model, "sample", sample_size, seed, augment)


def solve(inst: Instance, model: FRIPN, cfg: DecodeConfig = DecodeConfig()) -> tuple[Solution, float]:
    t0 = time.perf_counter()
    if cfg.strategy == "greedy":
        sol = greedy_decode(inst, model, augment=cfg.augment)
    else:
        sol = sample_decode(inst, model, cfg.sample_size, cfg.seed, augment=cfg.augment)
    return sol, time.perf_counter() - t0


def trajectories_explored(cfg: DecodeConfig) -> int:
    per_view = cfg.sample_size if cfg.strategy == "sampling" else 1
    return per_view * (8 if cfg.augment else 1)


def mean_cost(solutions) -> float:
    solutions = list(solutions)
    return math.fsum(s.total_cost for s in solutions) / len(solutions)
