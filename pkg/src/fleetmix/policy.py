"""FRIPN: node encoder, fleet-aware vehicle encoder and joint (vehicle, node) decoder.

Shapes use B for batch rows, N1 = n+1 nodes (row 0 is the depot), K vehicle
types and d = embed_dim. The batched forward pieces are methods of
:class:`FRIPN`; module-level functions give the single-instance view used by
tests and the reference environment.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from . import autograd as ag
from .errors import AllMasked, ModelManifestMismatch
from .instance import Instance

VEHICLE_SCALAR_FEATURES = 6  # x, y, remaining, Q, c, AF1


@dataclass(frozen=True)
class HyperParams:
    embed_dim: int = 128
    heads: int = 8
    encoder_layers: int = 3
    clip: float = 10.0
    use_af2: bool = True
    ff_hidden: int = 512
    # divisors that keep vehicle inputs roughly in [0, 1] for generated instances
    fixed_scale: float = 63.0
    unit_scale: float = 3.0
    load_scale: float = 3.0

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if self.encoder_layers < 1:
            raise ValueError("need at least one encoder layer")

    @property
    def key_dim(self) -> int:
        return self.embed_dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.dk = d // heads
        self.W_q = nn.Linear(d, d, bias=False)
        self.W_k = nn.Linear(d, d, bias=False)
        self.W_v = nn.Linear(d, d, bias=False)
        self.W_o = nn.Linear(d, d, bias=False)

    def split(self, x):
        # (B, T, d) -> (B, h, T, dk)
        B, T, _ = x.shape
        return x.view(B, T, self.heads, self.dk).transpose(1, 2)

    def project_kv(self, kv):
        return self.split(self.W_k(kv)), self.split(self.W_v(kv))

    def attend(self, q_in, k, v):
        B, T, d = q_in.shape
        q = self.split(self.W_q(q_in))
        scores = ag.matmul(q, ag.transpose(k)) / math.sqrt(self.dk)
        z = ag.matmul(ag.softmax(scores), v)
        return self.W_o(z.transpose(1, 2).reshape(B, T, d))

    def forward(self, q_in, kv_in):
        k, v = self.project_kv(kv_in)
        return self.attend(q_in, k, v)


class InstanceNorm(nn.Module):
    def __init__(self, d: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(d))
        self.bias = nn.Parameter(torch.zeros(d))

    def forward(self, x):
        return ag.instance_norm(x, self.weight, self.bias)


class AttentionLayer(nn.Module):
    """MHA -> skip + instance norm -> feed-forward -> skip + instance norm."""

    def __init__(self, d: int, heads: int, ff_hidden: int):
        super().__init__()
        self.mha = MultiHeadAttention(d, heads)
        self.norm1 = InstanceNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, ff_hidden), nn.ReLU(), nn.Linear(ff_hidden, d))
        self.norm2 = InstanceNorm(d)

    def forward(self, h):
        h = self.norm1(ag.add(self.mha(h, h), h))
        return self.norm2(ag.add(self.ff(h), h))


@dataclass
class NodeContext:
    """Per-episode decoder inputs derived once from the node embeddings."""

    emb: torch.Tensor       # (B, N1, d)
    cross_k: torch.Tensor   # (B, h, N1, dk)
    cross_v: torch.Tensor   # (B, h, N1, dk)
    ptr_k: torch.Tensor     # (B, N1, d)

    def index(self, rows):
        return NodeContext(*(t.index_select(0, rows) for t in (self.emb, self.cross_k, self.cross_v, self.ptr_k)))


class FRIPN(nn.Module):
    def __init__(self, hp: HyperParams = HyperParams()):
        super().__init__()
        self.hp = hp
        d = hp.embed_dim
        self.depot_proj = nn.Linear(2, d)
        self.customer_proj = nn.Linear(3, d)
        self.encoder = nn.ModuleList([AttentionLayer(d, hp.heads, hp.ff_hidden) for _ in range(hp.encoder_layers)])
        self.vehicle_proj = nn.Linear(VEHICLE_SCALAR_FEATURES + (d if hp.use_af2 else 0), d)
        self.vehicle_layer = AttentionLayer(d, hp.heads, hp.ff_hidden)
        self.cross = MultiHeadAttention(d, hp.heads)
        self.ptr_q = nn.Linear(d, d, bias=False)
        self.ptr_k = nn.Linear(d, d, bias=False)
        self.double()

    # -- node encoding ------------------------------------------------------
    def encode(self, coords: torch.Tensor, demands: torch.Tensor) -> torch.Tensor:
        """coords (B, N1, 2), demands (B, N1) -> node embeddings (B, N1, d)."""
        depot = self.depot_proj(coords[:, :1, :])
        cust = self.customer_proj(ag.concat([coords[:, 1:, :], demands[:, 1:, None]], dim=-1))
        h = ag.concat([depot, cust], dim=1)
        for layer in self.encoder:
            h = layer(h)
        return h

    def node_context(self, emb: torch.Tensor) -> NodeContext:
        k, v = self.cross.project_kv(emb)
        return NodeContext(emb, k, v, self.ptr_k(emb))

    # -- vehicle encoding ---------------------------------------------------
    def vehicle_features(self, emb, pos_xy, remaining, capacity, unit, fixed, candidate, avail):
        """Per-type input rows (B, K, 6 [+ d]).

        AF1 (fixed cost) and AF2 (remaining graph embedding) are zero for
        employed slots.
        """
        hp = self.hp
        cand = candidate.to(emb.dtype)
        cols = [pos_xy,
                (remaining / hp.load_scale)[..., None],
                (capacity / hp.load_scale)[..., None],
                (unit / hp.unit_scale)[..., None],
                (fixed * cand / hp.fixed_scale)[..., None]]
        if hp.use_af2:
            cols.append(remaining_graph(emb, avail) * cand[..., None])
        return ag.concat(cols, dim=-1)

    def encode_vehicles(self, feats: torch.Tensor) -> torch.Tensor:
        return self.vehicle_layer(self.vehicle_proj(feats))

    # -- decoding -----------------------------------------------------------
    def logits(self, veh: torch.Tensor, ctx: NodeContext, mask: torch.Tensor) -> torch.Tensor:
        """(B, K, N1) clipped compatibilities; unavailable pairs hold the sentinel."""
        h_c = self.cross.attend(veh, ctx.cross_k, ctx.cross_v)
        q = self.ptr_q(h_c)
        u = ag.matmul(q, ag.transpose(ctx.ptr_k)) / math.sqrt(self.hp.key_dim)
        return ag.masked_fill(self.hp.clip * ag.tanh(u), mask)

    # -- checkpoint helpers -------------------------------------------------
    def named_tensors(self) -> dict[str, torch.Tensor]:
        return dict(self.named_parameters())

    def save(self, path, meta: dict | None = None):
        return ag.save_params(path, self.named_tensors(), {"hyperparams": self.hp.to_dict(), **(meta or {})})

    @classmethod
    def load(cls, path, hp: HyperParams | None = None) -> "FRIPN":
        _, meta = ag.load_params(path)
        stored = HyperParams(**meta["hyperparams"])
        if hp is not None and hp != stored:
            raise ModelManifestMismatch(f"checkpoint hyperparameters {stored} differ from requested {hp}")
        model = cls(stored)
        expected = {k: tuple(v.shape) for k, v in model.named_parameters()}
        params, _ = ag.load_params(path, expected)
        with torch.no_grad():
            for name, p in model.named_parameters():
                p.copy_(params[name])
        return model


def remaining_graph(emb: torch.Tensor, avail: torch.Tensor) -> torch.Tensor:
    """Sum of available node embeddings divided by n+1.

    emb (B, N1, d), avail (B, K, N1) -> (B, K, d)
    """
    n1 = emb.shape[-2]
    return ag.matmul(avail.to(emb.dtype), emb) / n1


def make_model(hp: HyperParams = HyperParams(), seed: int = 0) -> FRIPN:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        return FRIPN(hp)
    finally:
        torch.random.set_rng_state(gen_state)


# ------------------------------------------------------------ single-instance API

def _inst_tensors(inst: Instance):
    return (torch.tensor(inst.coords, dtype=ag.DTYPE)[None], torch.tensor(inst.demands, dtype=ag.DTYPE)[None])


def encode_nodes(inst: Instance, model: FRIPN) -> torch.Tensor:
    """(n+1, d) node embeddings; row 0 is the depot."""
    coords, demands = _inst_tensors(inst)
    return model.encode(coords, demands)[0]


def remaining_graph_embedding(node_emb: torch.Tensor, state, inst: Instance, k: int) -> torch.Tensor:
    from .env import action_mask

    avail = torch.as_tensor(action_mask(state, inst)[k])
    return remaining_graph(node_emb[None], avail[None, None])[0, 0]


def encode_vehicles(node_emb: torch.Tensor, state, inst: Instance, model: FRIPN) -> torch.Tensor:
    """(K, d) vehicle embeddings for an :class:`~fleetmix.env.EnvState`."""
    from .env import action_mask

    avail = torch.as_tensor(action_mask(state, inst))[None]
    pos = torch.tensor(inst.coords, dtype=ag.DTYPE)[[s.position for s in state.slots]][None]
    rem = torch.tensor([[s.remaining_capacity for s in state.slots]], dtype=ag.DTYPE)
    cand = torch.tensor([[not s.employed for s in state.slots]])
    feats = model.vehicle_features(node_emb[None], pos, rem,
                                   torch.tensor(inst.capacities, dtype=ag.DTYPE)[None],
                                   torch.tensor(inst.unit_costs, dtype=ag.DTYPE)[None],
                                   torch.tensor(inst.fixed_costs, dtype=ag.DTYPE)[None], cand, avail)
    return model.encode_vehicles(feats)[0]


def action_logits(node_emb: torch.Tensor, veh_emb: torch.Tensor, mask, model: FRIPN) -> torch.Tensor:
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if not bool(mask.any()):
        raise AllMasked("no (vehicle, node) pair is available")
    ctx = model.node_context(node_emb[None])
    return model.logits(veh_emb[None], ctx, mask[None])[0]


def action_distribution(logits: torch.Tensor) -> torch.Tensor:
    """Joint softmax over every (vehicle, node) pair."""
    if not bool((logits > ag.NEG_INF / 2).any()):
        raise AllMasked("every action is masked")
    flat = ag.softmax(logits.reshape(*logits.shape[:-2], -1))
    return flat.view_as(logits)
