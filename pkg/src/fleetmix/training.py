"""REINFORCE with a per-instance shared baseline.

Every training step draws a vehicle-type count z, generates B fresh instances
with exactly z types, samples J trajectories per instance and uses the mean
reward of those J trajectories as the baseline for each of them.

All randomness of global step g derives from ``SeedSequence([seed, g])``, so a
run resumed from an epoch checkpoint replays the following steps exactly.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import autograd as ag
from .batch_env import InstanceBatch
from .generator import GeneratorConfig, generate_instance
from .instance import Instance
from .policy import FRIPN, HyperParams, make_model
from .rollout import rollout, uniform_streams

log = logging.getLogger(__name__)

VALIDATION_SEED = 7_000_000


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    steps_per_epoch: int = 100
    batch_size: int = 32
    trajectories: int = 8
    type_counts: tuple[int, ...] = (3, 4, 5, 6)
    learning_rate: float = 1e-4
    seed: int = 0
    use_af2: bool = True
    n: int = 10
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    hyperparams: HyperParams = field(default_factory=HyperParams)
    grad_clip: float | None = None
    val_size: int = 64
    val_seed: int = VALIDATION_SEED

    def __post_init__(self):
        if self.trajectories < 2:
            raise ValueError("the shared baseline needs at least 2 trajectories per instance")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0 or self.steps_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and steps_per_epoch >= 1")
        if not self.type_counts:
            raise ValueError("type_counts must not be empty")
        # the ablation switch lives in one place
        if self.hyperparams.use_af2 != self.use_af2:
            object.__setattr__(self, "hyperparams", replace(self.hyperparams, use_af2=self.use_af2))
        if self.generator.n != self.n:
            object.__setattr__(self, "generator", replace(self.generator, n=self.n))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "generator" in d:
            g = dict(d["generator"])
            for key in ("type_count_range", "demand_range", "capacity_range", "f_sta_range", "unit_cost_range"):
                if key in g:
                    g[key] = tuple(g[key])
            d["generator"] = GeneratorConfig(**g)
        if "hyperparams" in d:
            d["hyperparams"] = HyperParams(**d["hyperparams"])
        if "type_counts" in d:
            d["type_counts"] = tuple(d["type_counts"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)

    def append_step(self, rec: dict):
        self.steps.append(rec)

    def append_epoch(self, rec: dict):
        self.epochs.append(rec)

    def validation_curve(self) -> list[float]:
        return [e["val_cost"] for e in self.epochs]


def shared_baseline(rewards) -> float:
    rewards = list(rewards)
    if not rewards:
        raise ValueError("shared baseline of an empty reward list")
    return sum(rewards) / len(rewards)


def advantages(rewards: torch.Tensor) -> torch.Tensor:
    """(B, J) rewards -> rewards minus each row's mean."""
    return rewards - rewards.mean(dim=1, keepdim=True)


def step_rng(seed: int, global_step: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, global_step])))


def sample_training_batch(cfg: TrainConfig, global_step: int) -> tuple[list[Instance], int]:
    """Fleet size z, then B instances that all have exactly z vehicle types."""
    rng = step_rng(cfg.seed, global_step)
    z = int(rng.choice(cfg.type_counts))
    seeds = rng.integers(0, 2 ** 62, size=cfg.batch_size)
    gen = replace(cfg.generator, type_count_range=(z, z))
    insts = [generate_instance(gen.with_seed(int(s))) for s in seeds]
    uniform_seed = int(rng.integers(0, 2 ** 62))
    return insts, uniform_seed


def sample_trajectories(inst: Instance, model: FRIPN, J: int, seed: int):
    """J sampled episodes of one instance -> (RolloutResult, list of action-pair lists)."""
    batch = InstanceBatch.from_instances([inst])
    u = uniform_streams(seed, J, 2 * inst.n)
    res = rollout(model, batch, repeats=J, mode="sample", uniforms=u)
    return res, [res.action_pairs(j, inst.n + 1) for j in range(J)]


def policy_gradient_step(instances: list[Instance], model: FRIPN, opt: ag.AdamState, cfg: TrainConfig,
                         uniform_seed: int) -> dict:
    J = cfg.trajectories
    batch = InstanceBatch.from_instances(instances)
    u = uniform_streams(uniform_seed, batch.size * J, 2 * batch.n)
    res = rollout(model, batch, repeats=J, mode="sample", uniforms=u)
    reward = -res.cost.view(batch.size, J)
    adv = advantages(reward).detach()
    loss = -(adv * res.log_prob.view(batch.size, J)).mean()
    opt.optimizer.zero_grad(set_to_none=False)
    ag.backward(loss)
    params = [p for p in model.parameters()]
    grad_norm = float(torch.sqrt(sum((p.grad ** 2).sum() for p in params)))
    if cfg.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
    ag.adam_step(params, None, opt)
    return {"loss": float(loss.detach()), "mean_cost": float(res.cost.mean()), "baseline": float(reward.mean()),
            "grad_norm": grad_norm, "num_types": batch.num_types}


def validation_instances(cfg: TrainConfig) -> list[Instance]:
    gen = replace(cfg.generator, type_count_range=(min(cfg.type_counts), max(cfg.type_counts)))
    return [generate_instance(gen.with_seed(cfg.val_seed + cfg.n * 100_000 + i)) for i in range(cfg.val_size)]


@torch.no_grad()
def greedy_costs(model: FRIPN, instances: list[Instance]) -> np.ndarray:
    """Greedy rollout cost per instance; instances are grouped by shape to batch them."""
    out = np.empty(len(instances))
    groups: dict[tuple[int, int], list[int]] = {}
    for i, inst in enumerate(instances):
        groups.setdefault((inst.n, inst.num_types), []).append(i)
    for idx in groups.values():
        res = rollout(model, InstanceBatch.from_instances([instances[i] for i in idx]), mode="greedy")
        out[idx] = res.cost.numpy()
    return out


def _adam_tensors(model: FRIPN, opt: ag.AdamState) -> dict[str, torch.Tensor]:
    out = {}
    for name, p in model.named_parameters():
        st = opt.optimizer.state.get(p)
        if st:
            out[f"exp_avg/{name}"] = st["exp_avg"]
            out[f"exp_avg_sq/{name}"] = st["exp_avg_sq"]
            out[f"step/{name}"] = torch.as_tensor(float(st["step"]), dtype=ag.DTYPE).reshape(1)
    return out


def save_checkpoint(run_dir: Path, epoch: int, model: FRIPN, opt: ag.AdamState, cfg: TrainConfig,
                    global_step: int) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt = model.save(run_dir / f"{epoch}.ckpt", {"epoch": epoch, "global_step": global_step,
                                                 "use_af2": cfg.use_af2})
    ag.save_params(run_dir / f"{epoch}.adam", _adam_tensors(model, opt), {"global_step": global_step})
    manifest = {"hyperparams": cfg.hyperparams.to_dict(), "use_af2": cfg.use_af2, "latest_epoch": epoch,
                "global_step": global_step, "checkpoint": ckpt.name, "train_config": cfg.to_dict()}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return ckpt


def load_checkpoint(run_dir: Path, epoch: int, cfg: TrainConfig) -> tuple[FRIPN, ag.AdamState, int]:
    model = FRIPN.load(run_dir / f"{epoch}.ckpt", cfg.hyperparams)
    opt = ag.make_adam(model.parameters(), lr=cfg.learning_rate)
    tensors, meta = ag.load_params(run_dir / f"{epoch}.adam")
    for name, p in model.named_parameters():
        if f"exp_avg/{name}" in tensors:
            opt.optimizer.state[p] = {"step": torch.tensor(float(tensors[f"step/{name}"][0])),
                                      "exp_avg": tensors[f"exp_avg/{name}"].clone(),
                                      "exp_avg_sq": tensors[f"exp_avg_sq/{name}"].clone()}
    return model, opt, int(meta["global_step"])


def train(cfg: TrainConfig, run_dir=None, resume_epoch: int | None = None,
          model: FRIPN | None = None) -> tuple[FRIPN, TrainLog]:
    run_dir = Path(run_dir) if run_dir is not None else None
    if resume_epoch is not None:
        model, opt, global_step = load_checkpoint(run_dir, resume_epoch, cfg)
        first_epoch = resume_epoch + 1
    else:
        model = model or make_model(cfg.hyperparams, seed=cfg.seed)
        opt = ag.make_adam(model.parameters(), lr=cfg.learning_rate)
        global_step, first_epoch = 0, 1
    val = validation_instances(cfg)
    tlog = TrainLog()
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    log_fh = (run_dir / "train_log.jsonl").open("a") if run_dir is not None else None

    def emit(rec):
        if log_fh is not None:
            log_fh.write(json.dumps(rec) + "\n")
            log_fh.flush()

    try:
        if resume_epoch is None:
            rec = {"kind": "epoch", "epoch": 0, "val_cost": float(greedy_costs(model, val).mean()),
                   "global_step": 0}
            tlog.append_epoch(rec)
            emit(rec)
        for epoch in range(first_epoch, cfg.epochs + 1):
            for _ in range(cfg.steps_per_epoch):
                t0 = time.perf_counter()
                insts, useed = sample_training_batch(cfg, global_step)
                metrics = policy_gradient_step(insts, model, opt, cfg, useed)
                global_step += 1
                rec = {"kind": "step", "epoch": epoch, "global_step": global_step,
                       "seconds": time.perf_counter() - t0, **metrics}
                tlog.append_step(rec)
                emit(rec)
            rec = {"kind": "epoch", "epoch": epoch, "val_cost": float(greedy_costs(model, val).mean()),
                   "global_step": global_step}
            tlog.append_epoch(rec)
            emit(rec)
            log.info("epoch %d: greedy validation cost %.4f", epoch, rec["val_cost"])
            if run_dir is not None:
                save_checkpoint(run_dir, epoch, model, opt, cfg, global_step)
    finally:
        if log_fh is not None:
            log_fh.close()
    return model, tlog
