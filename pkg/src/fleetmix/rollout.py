"""Batched episode loop shared by training and inference."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import autograd as ag
from .batch_env import BatchEnv, InstanceBatch
from .errors import MaskedAction
from .policy import FRIPN


@dataclass
class RolloutResult:
    actions: torch.Tensor   # (N, T) flat actions, trailing no-ops for rows that finished early
    log_prob: torch.Tensor  # (N,) log p(trajectory)
    cost: torch.Tensor      # (N,) accumulated cost
    steps: torch.Tensor     # (N,) real decisions taken per row

    def action_pairs(self, row: int, n1: int) -> list[tuple[int, int]]:
        acts = self.actions[row, : int(self.steps[row])].tolist()
        return [(a // n1, a % n1) for a in acts]


def uniform_streams(seed: int, rows: int, length: int, offset: int = 0) -> torch.Tensor:
    """Row i gets its own PCG64 stream keyed by ``(seed, offset + i)``.

    Row i's draws do not depend on how many rows are requested, so a set of
    k samples is always a prefix of a larger set drawn with the same seed.
    """
    out = np.empty((rows, length))
    for i in range(rows):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, offset + i])))
        out[i] = rng.random(length)
    return torch.from_numpy(out)


def sample_from(probs: torch.Tensor, mask: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Inverse-CDF draw per row; never lands on a zero-probability entry."""
    c = probs.cumsum(dim=1)
    idx = (c <= u[:, None]).sum(dim=1)
    cols = torch.arange(mask.shape[1]).expand_as(mask)
    last_valid = torch.where(mask, cols, torch.full_like(cols, -1)).max(dim=1).values
    return torch.minimum(idx, last_valid)


def rollout(model: FRIPN, batch: InstanceBatch, repeats: int = 1, mode: str = "greedy",
            uniforms: torch.Tensor | None = None, actions: torch.Tensor | None = None,
            step_hook: Callable[[int, torch.Tensor, torch.Tensor], None] | None = None) -> RolloutResult:
    """Run every instance ``repeats`` times (rows ``b*repeats + j``) to completion.

    ``mode`` is "greedy" (first argmax of the joint distribution), "sample"
    (needs ``uniforms`` of shape (B*repeats, >= 2n)) or "replay" (follows the
    flat ``actions`` of shape (B*repeats, T) and scores them; rows that are
    done ignore their remaining entries).
    """
    if mode not in ("greedy", "sample", "replay"):
        raise ValueError(f"unknown decode mode {mode!r}")
    emb = model.encode(batch.coords, batch.demands)
    ctx = model.node_context(emb)
    if repeats > 1:
        rows = torch.arange(batch.size).repeat_interleave(repeats)
        ctx = ctx.index(rows)
        batch = batch.index(rows)
    env = BatchEnv(batch)
    N, K, n1 = env.N, env.K, env.n1
    if mode == "sample" and (uniforms is None or uniforms.shape[0] != N or uniforms.shape[1] < env.max_steps()):
        raise ValueError(f"sampling needs uniforms of shape ({N}, >= {env.max_steps()})")
    if mode == "replay" and (actions is None or actions.shape[0] != N):
        raise ValueError(f"replay needs actions with {N} rows")

    log_prob = torch.zeros(N, dtype=ag.DTYPE)
    taken = []
    row_idx = torch.arange(N)[:, None]
    while not env.all_done:
        if env.t >= env.max_steps():
            raise RuntimeError("episode exceeded 2n steps")
        mask = env.mask()
        pos_xy = batch.coords[row_idx, env.position]
        feats = model.vehicle_features(ctx.emb, pos_xy, env.remaining, batch.capacity, batch.unit,
                                       batch.fixed, ~env.employed, mask)
        veh = model.encode_vehicles(feats)
        logits = model.logits(veh, ctx, mask).reshape(N, K * n1)
        logp_all = ag.log_softmax(logits)
        flat_mask = mask.reshape(N, K * n1)
        if step_hook is not None:
            step_hook(env.t, logp_all.detach().exp(), flat_mask)
        if mode == "greedy":
            a = logp_all.detach().argmax(dim=1)
        elif mode == "replay":
            if env.t >= actions.shape[1]:
                raise ValueError("replayed actions end before every episode finishes")
            a = torch.where(env.done, torch.zeros_like(actions[:, env.t]), actions[:, env.t])
            if not bool(flat_mask.gather(1, a[:, None]).all()):
                raise MaskedAction(f"replayed action at step {env.t} is masked")
        else:
            a = sample_from(logp_all.detach().exp(), flat_mask, uniforms[:, env.t])
        log_prob = log_prob + ag.gather(logp_all, a[:, None]).squeeze(1)
        env.step(a)
        taken.append(a)
    acts = torch.stack(taken, dim=1) if taken else torch.zeros(N, 0, dtype=torch.long)
    return RolloutResult(acts, log_prob, env.cost, env.steps)
