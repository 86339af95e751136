import math

import numpy as np
import pytest
import torch

from fleetmix import autograd as ag
from fleetmix.batch_env import BatchEnv, InstanceBatch
from fleetmix.env import action_mask, random_rollout, reset, step
from fleetmix.errors import AllMasked, ModelManifestMismatch
from fleetmix.instance import Instance
from fleetmix.policy import (HyperParams, action_distribution, action_logits, encode_nodes, encode_vehicles,
                             make_model, remaining_graph_embedding)

from conftest import random_instance

SMALL = HyperParams(embed_dim=16, heads=2, encoder_layers=1, ff_hidden=32)


@pytest.fixture(scope="module")
def model():
    return make_model(SMALL, seed=3)


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        HyperParams(embed_dim=10, heads=3)
    with pytest.raises(ValueError):
        HyperParams(clip=0)
    with pytest.raises(ValueError):
        HyperParams(encoder_layers=0)


def test_single_customer_embedding(model):
    inst = Instance.from_arrays((0.5, 0.5), [(0.1, 0.9)], [0.3], [1.0], [2.0], [1.0])
    emb = encode_nodes(inst, model)
    assert emb.shape == (2, 16) and torch.isfinite(emb).all()


def test_encoder_permutation_equivariant(model):
    inst = random_instance(7, 5)
    perm = [3, 0, 6, 2, 5, 1, 4]
    shuffled = Instance(inst.depot, tuple(inst.customers[i] for i in perm), inst.fleet)
    a, b = encode_nodes(inst, model), encode_nodes(shuffled, model)
    assert torch.allclose(a[0], b[0], atol=1e-12)
    assert torch.allclose(a[1:][perm], b[1:], atol=1e-12)


def test_encoder_deterministic(model):
    inst = random_instance(6, 8)
    assert torch.equal(encode_nodes(inst, model), encode_nodes(inst, model))
    assert torch.equal(encode_nodes(inst, make_model(SMALL, seed=3)), encode_nodes(inst, model))


def test_remaining_graph_fresh_and_empty(model):
    inst = random_instance(5, 9)
    emb = encode_nodes(inst, model).detach()
    s = reset(inst)
    h = remaining_graph_embedding(emb, s, inst, 0)
    assert torch.allclose(h, emb[1:].sum(0) / 6, atol=1e-14)
    # fill slot 0 with everything that fits, then every remaining node is unavailable to it
    tiny = Instance.from_arrays((0, 0), [(1, 0)], [0.5], [0.5], [1.0], [1.0])
    emb1 = encode_nodes(tiny, model).detach()
    s1, _ = step(reset(tiny), (0, 1), tiny)
    s1, _ = step(s1, (0, 0), tiny)
    assert torch.equal(remaining_graph_embedding(emb1, s1, tiny, 0), torch.zeros(16, dtype=torch.float64))


def test_remaining_graph_mid_episode(model):
    inst = random_instance(6, 10)
    emb = encode_nodes(inst, model).detach()
    s = reset(inst)
    for a in [(0, 2), (0, 5), (1, 3)]:
        s, _ = step(s, a, inst)
    m = action_mask(s, inst)
    for k in range(inst.num_types):
        ref = sum(emb[j] for j in range(7) if m[k, j]) / 7
        assert torch.allclose(remaining_graph_embedding(emb, s, inst, k), torch.as_tensor(ref), atol=1e-12)


def test_vehicle_encoding_and_af1(model):
    inst = random_instance(5, 11, types=(3, 3))
    emb = encode_nodes(inst, model)
    s = reset(inst)
    veh = encode_vehicles(emb, s, inst, model)
    assert veh.shape == (3, 16) and torch.isfinite(veh).all()

    def af1(state):
        avail = torch.as_tensor(action_mask(state, inst))[None]
        pos = torch.tensor(inst.coords)[[sl.position for sl in state.slots]][None]
        rem = torch.tensor([[sl.remaining_capacity for sl in state.slots]], dtype=torch.float64)
        cand = torch.tensor([[not sl.employed for sl in state.slots]])
        f = model.vehicle_features(emb[None], pos, rem, torch.tensor(inst.capacities)[None],
                                   torch.tensor(inst.unit_costs)[None], torch.tensor(inst.fixed_costs)[None],
                                   cand, avail)[0]
        return f[:, 5] * SMALL.fixed_scale, f[:, 6:]

    fixed, lg = af1(s)
    assert torch.allclose(fixed, torch.tensor(inst.fixed_costs))
    s, _ = step(s, (1, 2), inst)
    fixed, lg = af1(s)
    assert fixed[1] == 0 and fixed[0] > 0
    assert torch.equal(lg[1], torch.zeros(16, dtype=torch.float64))


def test_no_af2_shape():
    m = make_model(HyperParams(embed_dim=16, heads=2, encoder_layers=1, ff_hidden=32, use_af2=False))
    inst = random_instance(5, 12, types=(4, 4))
    emb = encode_nodes(inst, m)
    assert encode_vehicles(emb, reset(inst), inst, m).shape == (4, 16)
    assert m.vehicle_proj.in_features == 6


def test_logits_range_and_mask(model):
    inst = random_instance(6, 13)
    emb = encode_nodes(inst, model)
    s = reset(inst)
    s, _ = step(s, (0, 1), inst)
    mask = action_mask(s, inst)
    logits = action_logits(emb, encode_vehicles(emb, s, inst, model), mask, model)
    finite = logits[torch.as_tensor(mask)]
    assert (finite.abs() < SMALL.clip).all()
    p = action_distribution(logits)
    assert (p[~torch.as_tensor(mask)] == 0).all()
    assert abs(p.sum().item() - 1) <= 1e-12
    with pytest.raises(AllMasked):
        action_logits(emb, encode_vehicles(emb, s, inst, model), np.zeros_like(mask), model)


def test_logits_scalar_trace():
    hp = HyperParams(embed_dim=4, heads=1, encoder_layers=1, ff_hidden=8, clip=10.0)
    m = make_model(hp, seed=21)
    inst = Instance.from_arrays((0.2, 0.3), [(0.9, 0.1), (0.4, 0.8), (0.6, 0.6)], [0.2, 0.3, 0.4],
                                [1.0, 2.0], [3.0, 5.0], [1.0, 1.5])
    emb = encode_nodes(inst, m).detach()
    veh = encode_vehicles(emb, reset(inst), inst, m).detach()
    mask = np.ones((2, 4), dtype=bool)
    mask[:, 0] = False
    got = action_logits(emb, veh, mask, m).detach().numpy()

    W = {k: v.detach().numpy() for k, v in m.named_parameters()}
    E, V = emb.numpy(), veh.numpy()
    want = np.empty((2, 4))
    for k in range(2):
        q = W["cross.W_q.weight"] @ V[k]
        keys = [W["cross.W_k.weight"] @ E[j] for j in range(4)]
        vals = [W["cross.W_v.weight"] @ E[j] for j in range(4)]
        s = [float(q @ keys[j]) / 2.0 for j in range(4)]
        w = [math.exp(x - max(s)) for x in s]
        ctx = sum(w[j] / sum(w) * vals[j] for j in range(4))
        h = W["cross.W_o.weight"] @ ctx
        qq = W["ptr_q.weight"] @ h
        for j in range(4):
            u = float(qq @ (W["ptr_k.weight"] @ E[j])) / 2.0
            want[k, j] = 10.0 * math.tanh(u) if mask[k, j] else ag.NEG_INF
    assert np.allclose(got, want, atol=1e-12)


def test_distribution_cases():
    neg = ag.NEG_INF
    p = action_distribution(ag.tensor([[neg, 0.3], [neg, neg]]))
    assert p[0, 1] == 1.0 and p.sum() == 1.0
    p = action_distribution(ag.tensor([[neg, 2.0], [2.0, neg]]))
    assert p[0, 1] == 0.5 and p[1, 0] == 0.5
    p = action_distribution(ag.tensor(torch.zeros(2, 4)))
    assert torch.equal(p, torch.full((2, 4), 0.125, dtype=torch.float64))
    with pytest.raises(AllMasked):
        action_distribution(ag.tensor([[neg, neg]]))


def test_checkpoint_round_trip(tmp_path, model):
    model.save(tmp_path / "m.ckpt")
    back = type(model).load(tmp_path / "m.ckpt")
    for (a, p), (b, q) in zip(model.named_parameters(), back.named_parameters()):
        assert a == b and torch.equal(p, q)
    with pytest.raises(ModelManifestMismatch):
        type(model).load(tmp_path / "m.ckpt", HyperParams(embed_dim=32, heads=2, encoder_layers=1))


def test_batched_env_matches_reference():
    insts = [random_instance(7, s, types=(4, 4)) for s in range(5)]
    rng = np.random.default_rng(0)
    trajs = [random_rollout(i, rng)[0] for i in insts]
    env = BatchEnv(InstanceBatch.from_instances(insts))
    T = max(len(t) for t in trajs)
    for t in range(T):
        mask = env.mask()
        for b, inst in enumerate(insts):
            if t < len(trajs[b]):
                s = reset(inst)
                for a in trajs[b][:t]:
                    s, _ = step(s, a, inst)
                assert np.array_equal(mask[b].numpy(), action_mask(s, inst))
        acts = torch.tensor([tr[t][0] * 8 + tr[t][1] if t < len(tr) else 0 for tr in trajs])
        env.step(acts, mask)
    assert env.all_done
    for b, inst in enumerate(insts):
        s = reset(inst)
        for a in trajs[b]:
            s, _ = step(s, a, inst)
        assert abs(env.cost[b].item() - s.accumulated_cost) <= 1e-12


def test_replay_reproduces_sampled_rollout(model):
    from fleetmix.errors import MaskedAction
    from fleetmix.rollout import rollout, uniform_streams

    batch = InstanceBatch.from_instances([random_instance(6, s, types=(3, 3)) for s in range(4)])
    u = uniform_streams(9, 4 * 2, 12)
    res = rollout(model, batch, repeats=2, mode="sample", uniforms=u)
    again = rollout(model, batch, repeats=2, mode="replay", actions=res.actions)
    assert torch.equal(again.actions, res.actions)
    assert torch.allclose(again.log_prob, res.log_prob, rtol=0, atol=1e-12)
    assert torch.equal(again.cost, res.cost)
    bad = res.actions.clone()
    bad[:, 0] = 0  # depot of an idle slot
    with pytest.raises(MaskedAction):
        rollout(model, batch, repeats=2, mode="replay", actions=bad)
    with pytest.raises(ValueError):
        rollout(model, batch, repeats=2, mode="replay", actions=res.actions[:, :2])
