"""Vectorised version of :mod:`fleetmix.env` for many rollouts at once.

Rows are independent episodes; all rows share n and the number of vehicle
types. Actions are flat indices ``type * (n+1) + node``. A finished row only
has the no-op action 0 available so the policy can keep stepping it with
probability 1 (zero log-probability, zero gradient).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import torch

from .autograd import DTYPE
from .errors import InvalidInstance, MaskedAction
from .instance import LOAD_EPS, Instance


@dataclass
class InstanceBatch:
    coords: torch.Tensor     # (B, n+1, 2)
    demands: torch.Tensor    # (B, n+1), depot demand 0
    capacity: torch.Tensor   # (B, K)
    fixed: torch.Tensor      # (B, K)
    unit: torch.Tensor       # (B, K)
    dist: torch.Tensor       # (B, n+1, n+1)

    @classmethod
    def from_instances(cls, insts: list[Instance]) -> "InstanceBatch":
        n, k = insts[0].n, insts[0].num_types
        if any(i.n != n or i.num_types != k for i in insts):
            raise InvalidInstance("a batch needs equal customer and vehicle-type counts")

        def t(attr):
            return torch.stack([torch.tensor(np.array(getattr(i, attr)), dtype=DTYPE) for i in insts])

        return cls(t("coords"), t("demands"), t("capacities"), t("fixed_costs"), t("unit_costs"), t("distances"))

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[1] - 1

    @property
    def num_types(self) -> int:
        return self.capacity.shape[1]

    def index(self, rows: torch.Tensor) -> "InstanceBatch":
        return InstanceBatch(**{f.name: getattr(self, f.name).index_select(0, rows) for f in fields(self)})


class BatchEnv:
    def __init__(self, batch: InstanceBatch):
        self.b = batch
        N, K, n1 = batch.size, batch.num_types, batch.n + 1
        self.N, self.K, self.n1 = N, K, n1
        self.rows = torch.arange(N)
        self.visited = torch.zeros(N, n1, dtype=torch.bool)
        self.position = torch.zeros(N, K, dtype=torch.long)
        self.remaining = batch.capacity.clone()
        self.employed = torch.zeros(N, K, dtype=torch.bool)
        self.cost = torch.zeros(N, dtype=DTYPE)
        self.done = torch.zeros(N, dtype=torch.bool)
        self.steps = torch.zeros(N, dtype=torch.long)
        self.t = 0

    @property
    def all_done(self) -> bool:
        return bool(self.done.all())

    def mask(self) -> torch.Tensor:
        """(N, K, n+1) availability, matching :func:`fleetmix.env.action_mask` row by row."""
        cust = (~self.visited[:, None, 1:]) & (self.b.demands[:, None, 1:] <= self.remaining[:, :, None] + LOAD_EPS)
        m = torch.cat([self.employed[:, :, None], cust], dim=-1)
        if self.done.any():
            m[self.done] = False
            m[self.done, 0, 0] = True
        return m

    def step(self, action: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """Apply flat actions (N,). Returns the per-row cost increment."""
        if mask is not None:
            ok = mask.view(self.N, -1).gather(1, action[:, None]).squeeze(1)
            if not bool(ok.all()):
                raise MaskedAction("batched step received a masked action")
        k = action // self.n1
        node = action % self.n1
        active = ~self.done
        r = self.rows
        pos_k = self.position[r, k]
        emp_k = self.employed[r, k]
        to_depot = node == 0
        delta = self.b.unit[r, k] * self.b.dist[r, pos_k, node]
        delta = delta + torch.where(~emp_k & ~to_depot, self.b.fixed[r, k], torch.zeros_like(delta))
        delta = torch.where(active, delta, torch.zeros_like(delta))
        self.cost = self.cost + delta

        new_pos = torch.where(to_depot, torch.zeros_like(node), node)
        new_rem = torch.where(to_depot, self.b.capacity[r, k], self.remaining[r, k] - self.b.demands[r, node])
        self.position[r, k] = torch.where(active, new_pos, pos_k)
        self.remaining[r, k] = torch.where(active, new_rem, self.remaining[r, k])
        self.employed[r, k] = torch.where(active, ~to_depot, emp_k)
        self.visited[r, node] = self.visited[r, node] | (active & ~to_depot)
        self.steps = self.steps + active.long()
        self.done = self.visited[:, 1:].all(dim=1) & ~self.employed.any(dim=1)
        self.t += 1
        return delta

    def max_steps(self) -> int:
        return 2 * (self.n1 - 1)


def pow2_ceil(x: float) -> float:
    return 2.0 ** math.ceil(math.log2(x)) if x > 0 else 1.0
