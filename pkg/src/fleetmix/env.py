"""Reference (single-instance) FSMVRP decision process.

One vehicle slot per type. A slot at the depot is a *candidate*; choosing a
customer for it employs the vehicle and charges its fixed cost. Choosing the
depot for an employed slot closes the route and puts a fresh candidate of the
same type at the depot, so every type can be used any number of times.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import IncompleteTrajectory, MaskedAction
from .instance import LOAD_EPS, Instance, Route, Solution, evaluate_solution


@dataclass(frozen=True)
class VehicleSlot:
    type_id: int
    position: int
    remaining_capacity: float
    employed: bool


@dataclass(frozen=True)
class EnvState:
    step: int
    visited: tuple[bool, ...]
    slots: tuple[VehicleSlot, ...]
    accumulated_cost: float
    done: bool


class Action(NamedTuple):
    type_id: int
    node: int


def reset(inst: Instance) -> EnvState:
    slots = tuple(VehicleSlot(k, 0, vt.capacity, False) for k, vt in enumerate(inst.fleet))
    return EnvState(0, (False,) * inst.n, slots, 0.0, False)


def action_mask(state: EnvState, inst: Instance) -> np.ndarray:
    """Boolean |K| x (n+1) matrix; True marks an available (type, node) pair."""
    mask = np.zeros((inst.num_types, inst.n + 1), dtype=bool)
    if state.done:
        return mask
    dem = inst.demands
    open_ = ~np.array(state.visited, dtype=bool)
    for k, slot in enumerate(state.slots):
        mask[k, 1:] = open_ & (dem[1:] <= slot.remaining_capacity + LOAD_EPS)
        mask[k, 0] = slot.employed
    return mask


def step(state: EnvState, action, inst: Instance) -> tuple[EnvState, float]:
    k, node = int(action[0]), int(action[1])
    if state.done:
        raise MaskedAction("episode already finished")
    if not (0 <= k < inst.num_types and 0 <= node <= inst.n) or not action_mask(state, inst)[k, node]:
        raise MaskedAction(f"action (type {k}, node {node}) is not available in this state")
    slot = state.slots[k]
    vt = inst.fleet[k]
    delta = vt.unit_cost * inst.dist_rows[slot.position][node]
    visited = state.visited
    if node == 0:
        new_slot = VehicleSlot(k, 0, vt.capacity, False)
    else:
        if not slot.employed:
            delta += vt.fixed_cost
        new_slot = VehicleSlot(k, node, slot.remaining_capacity - inst.customers[node - 1].demand, True)
        visited = visited[: node - 1] + (True,) + visited[node:]
    slots = state.slots[:k] + (new_slot,) + state.slots[k + 1:]
    done = all(visited) and not any(s.employed for s in slots)
    return EnvState(state.step + 1, visited, slots, state.accumulated_cost + delta, done), delta


def run(inst: Instance, actions: Iterable) -> EnvState:
    state = reset(inst)
    for a in actions:
        state, _ = step(state, a, inst)
    return state


def extract_solution(trajectory: Sequence, inst: Instance) -> Solution:
    """Rebuild routes from a complete action sequence.

    Routes are listed in the order their vehicles returned to the depot.
    """
    state = reset(inst)
    open_routes: dict[int, list[int]] = {}
    routes = []
    for a in trajectory:
        state, _ = step(state, a, inst)
        k, node = int(a[0]), int(a[1])
        if node == 0:
            routes.append(Route(k, tuple(open_routes.pop(k))))
        else:
            open_routes.setdefault(k, []).append(node)
    if not state.done:
        raise IncompleteTrajectory(f"trajectory stops after {state.step} steps without finishing the episode")
    sol = Solution(tuple(routes))
    return replace(sol, total_cost=evaluate_solution(inst, sol))


def trajectory_reward(trajectory: Sequence, inst: Instance) -> float:
    state = run(inst, trajectory)
    if not state.done:
        raise IncompleteTrajectory(f"trajectory stops after {state.step} steps without finishing the episode")
    return -state.accumulated_cost


def solution_to_actions(sol: Solution) -> list[Action]:
    """Action sequence serving routes one after another; replays to the same solution."""
    out = []
    for r in sol.routes:
        out += [Action(r.vehicle_type, s) for s in r.stops]
        out.append(Action(r.vehicle_type, 0))
    return out


def random_rollout(inst: Instance, rng: np.random.Generator) -> tuple[list[Action], EnvState]:
    """Uniformly random masked-respecting episode."""
    state = reset(inst)
    actions = []
    while not state.done:
        ks, ns = np.nonzero(action_mask(state, inst))
        j = int(rng.integers(len(ks)))
        a = Action(int(ks[j]), int(ns[j]))
        state, _ = step(state, a, inst)
        actions.append(a)
    return actions, state
