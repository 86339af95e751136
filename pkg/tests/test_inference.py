import numpy as np
import pytest

from fleetmix.env import run
from fleetmix.errors import CoordsOutOfRange
from fleetmix.instance import Instance, validate_solution
from fleetmix.inference import (DecodeConfig, augment_instance, greedy_decode, mean_cost, policy_view,
                                sample_decode, solve, trajectories_explored)
from fleetmix.io import load_golden
from fleetmix.policy import HyperParams, make_model

from conftest import random_instance, toy

SMALL = HyperParams(embed_dim=16, heads=2, encoder_layers=1, ff_hidden=32)


@pytest.fixture(scope="module")
def model():
    return make_model(SMALL, seed=4)


def test_greedy_deterministic_and_valid(model):
    inst = random_instance(10, 1)
    a, b = greedy_decode(inst, model), greedy_decode(inst, model)
    assert a == b
    assert validate_solution(inst, a) == []


def test_forced_single_customer(model):
    sol = greedy_decode(toy(), model)
    assert sol.total_cost == 5 + 2 * 2 * 0.5


def test_single_sample(model):
    inst = random_instance(8, 2)
    sol = sample_decode(inst, model, sample_size=1, seed=3)
    assert validate_solution(inst, sol) == []


def test_sampling_prefix_monotone(model):
    inst = random_instance(10, 3)
    assert sample_decode(inst, model, 128, seed=9).total_cost <= sample_decode(inst, model, 16, seed=9).total_cost


def test_sampling_beats_greedy_on_average(model):
    insts = [random_instance(10, 100 + i) for i in range(100)]
    greedy = mean_cost(greedy_decode(i, model) for i in insts)
    sampled = mean_cost(sample_decode(i, model, 128, seed=i.n) for i in insts)
    assert sampled <= greedy


def test_dihedral_images():
    inst = Instance.from_arrays((0.5, 0.5), [(0.2, 0.7)], [0.1], [1.0], [1.0], [1.0], name="p")
    imgs = augment_instance(inst)
    pts = {(round(i.customers[0].x, 12), round(i.customers[0].y, 12)) for i in imgs}
    assert len(imgs) == 8 and (0.7, 0.2) in pts and (0.8, 0.3) in pts
    assert imgs[0].customers == inst.customers and imgs[0].depot == inst.depot and imgs[0].fleet == inst.fleet


def test_images_are_isometric():
    inst = random_instance(9, 5)
    rng = np.random.default_rng(1)
    from fleetmix.env import random_rollout
    acts, state = random_rollout(inst, rng)
    costs = [run(img, acts).accumulated_cost for img in augment_instance(inst)]
    assert max(costs) - min(costs) <= 1e-9


def test_augment_rejects_out_of_square():
    inst = Instance.from_arrays((0, 0), [(3, 4)], [1], [2], [1], [1])
    with pytest.raises(CoordsOutOfRange):
        augment_instance(inst)
    view = policy_view(inst)
    assert len(augment_instance(view)) == 8


def test_policy_view_keeps_feasibility(model):
    rec = load_golden(3)
    view = policy_view(rec.instance)
    assert (view.coords >= 0).all() and (view.coords <= 1).all()
    assert view.capacities.max() <= 3.0
    sol = greedy_decode(rec.instance, model)
    assert validate_solution(rec.instance, sol) == []


def test_augment_never_worse(model):
    for s in range(10):
        inst = random_instance(10, 200 + s)
        assert greedy_decode(inst, model, augment=True).total_cost <= greedy_decode(inst, model).total_cost
        assert (sample_decode(inst, model, 8, seed=s, augment=True).total_cost
                <= sample_decode(inst, model, 8, seed=s).total_cost)


def test_accounting_and_config():
    assert trajectories_explored(DecodeConfig("sampling", 128, augment=True)) == 1024
    assert trajectories_explored(DecodeConfig("greedy", augment=True)) == 8
    with pytest.raises(ValueError):
        DecodeConfig("beam")
    with pytest.raises(ValueError):
        DecodeConfig("sampling", sample_size=0)


def test_solve_reports_time(model):
    sol, secs = solve(random_instance(6, 7), model, DecodeConfig("sampling", 4, seed=1))
    assert secs >= 0 and sol.total_cost > 0


def test_monotone_pattern_n20(model):
    insts = [random_instance(20, 300 + i) for i in range(100)]
    g = mean_cost(greedy_decode(i, model) for i in insts)
    ga = mean_cost(greedy_decode(i, model, augment=True) for i in insts)
    s = mean_cost(sample_decode(i, model, 16, seed=0) for i in insts)
    sa = mean_cost(sample_decode(i, model, 16, seed=0, augment=True) for i in insts)
    assert g >= s and g >= ga and s >= sa
