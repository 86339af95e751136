import json

import numpy as np
import pytest
import torch

from fleetmix import autograd as ag
from fleetmix.batch_env import InstanceBatch
from fleetmix.env import extract_solution
from fleetmix.generator import GeneratorConfig
from fleetmix.instance import validate_solution
from fleetmix.policy import HyperParams, make_model
from fleetmix.rollout import rollout, uniform_streams
from fleetmix.training import (TrainConfig, advantages, greedy_costs, policy_gradient_step, sample_training_batch,
                               sample_trajectories, shared_baseline, train, validation_instances)

from conftest import random_instance

SMALL = HyperParams(embed_dim=16, heads=2, encoder_layers=1, ff_hidden=32)


def small_cfg(**kw):
    base = dict(epochs=1, steps_per_epoch=2, batch_size=2, trajectories=4, n=6, hyperparams=SMALL, val_size=4,
                learning_rate=1e-3)
    base.update(kw)
    return TrainConfig(**base)


def test_sample_trajectories_feasible_and_deterministic():
    inst = random_instance(6, 1)
    m = make_model(SMALL, seed=1)
    res, trajs = sample_trajectories(inst, m, 4, seed=5)
    assert len(trajs) == 4
    for t in trajs:
        assert len(t) <= 2 * inst.n
        assert validate_solution(inst, extract_solution(t, inst)) == []
    _, again = sample_trajectories(inst, m, 4, seed=5)
    assert again == trajs


def test_shared_baseline():
    assert shared_baseline([-10, -12, -14]) == -12
    assert shared_baseline([-3.5]) == -3.5
    with pytest.raises(ValueError):
        shared_baseline([])
    adv = advantages(torch.tensor([[-2.0, -2.0, -2.0]]))
    assert torch.equal(adv, torch.zeros(1, 3))


def test_advantages_sum_to_zero():
    r = torch.tensor([[-1.0, -2.0, -4.0, -8.0], [-0.5, -0.5, -0.25, -0.75]], dtype=torch.float64)
    assert torch.equal(advantages(r).sum(dim=1), torch.zeros(2, dtype=torch.float64))


def test_needs_two_trajectories():
    with pytest.raises(ValueError):
        TrainConfig(trajectories=1)


def test_zero_advantage_leaves_params():
    # one customer, one type: every trajectory is identical, so all advantages vanish
    from fleetmix.instance import Instance
    inst = Instance.from_arrays((0, 0), [(0.3, 0.4)], [0.2], [1.0], [5.0], [2.0])
    m = make_model(SMALL, seed=0)
    before = [p.detach().clone() for p in m.parameters()]
    opt = ag.make_adam(m.parameters(), lr=1e-2)
    cfg = small_cfg(n=1)
    metrics = policy_gradient_step([inst, inst], m, opt, cfg, uniform_seed=3)
    assert metrics["loss"] == 0.0
    assert all(torch.equal(a, b) for a, b in zip(before, m.parameters()))


def test_batches_share_type_count():
    cfg = small_cfg(type_counts=(3, 4, 5, 6), batch_size=8)
    seen = set()
    for g in range(12):
        insts, _ = sample_training_batch(cfg, g)
        ks = {i.num_types for i in insts}
        assert len(ks) == 1
        seen |= ks
    assert len(seen) > 1


def test_smoke_train_two_steps(tmp_path):
    cfg = small_cfg(epochs=1, steps_per_epoch=2, batch_size=2, trajectories=4, n=6)
    _, log = train(cfg, tmp_path / "run")
    assert len(log.steps) == 2
    lines = [json.loads(x) for x in (tmp_path / "run" / "train_log.jsonl").read_text().splitlines()]
    assert [x["kind"] for x in lines] == ["epoch", "step", "step", "epoch"]
    assert (tmp_path / "run" / "1.ckpt").is_file()


def test_resume_is_bit_exact(tmp_path):
    cfg = small_cfg(epochs=2, steps_per_epoch=2)
    full, log_full = train(cfg, tmp_path / "a")
    train(cfg.__class__(**{**cfg.__dict__, "epochs": 1}), tmp_path / "b")
    resumed, log_res = train(cfg, tmp_path / "b", resume_epoch=1)
    for p, q in zip(full.parameters(), resumed.parameters()):
        assert torch.equal(p, q)
    assert log_full.steps[-1]["loss"] == log_res.steps[-1]["loss"]


def test_fifty_steps_improve_validation():
    cfg = TrainConfig(epochs=1, steps_per_epoch=50, batch_size=16, trajectories=8, n=10, seed=1,
                      hyperparams=HyperParams(embed_dim=32, heads=4, encoder_layers=1, ff_hidden=64),
                      learning_rate=1e-3, val_size=32)
    _, log = train(cfg)
    curve = log.validation_curve()
    assert curve[-1] < curve[0]
