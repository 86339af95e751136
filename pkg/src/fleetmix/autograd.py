"""Dense float64 tensors with reverse-mode gradients, backed by torch.

The functions here are the primitives the policy network is written in.  Each
checks shapes up front and raises :class:`ShapeMismatch` naming both operands,
which torch's own messages do not always do.  Masking uses a finite sentinel
(``NEG_INF``) instead of ``-inf`` so that fully-masked rows never produce NaN;
after a softmax the sentinel entries are exactly 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
import torch

from .errors import NonScalarLoss, ShapeMismatch

DTYPE = torch.float64
NEG_INF = -1e9
NORM_EPS = 1e-8
CHECKPOINT_FORMAT = "fleetmix-params"
CHECKPOINT_VERSION = 1

Tensor = torch.Tensor


def tensor(data, requires_grad: bool = False) -> Tensor:
    return torch.tensor(np.asarray(data, dtype=np.float64), dtype=DTYPE, requires_grad=requires_grad)


def _shape(x) -> tuple:
    return tuple(x.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeMismatch(f"matmul: cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeMismatch(f"add: shapes {_shape(a)} and {_shape(b)} do not broadcast") from None
    return a + b


def concat(parts: list[Tensor], dim: int = -1) -> Tensor:
    ref = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != len(ref) or any(x != y for i, (x, y) in enumerate(zip(ref, other))
                                         if i != (dim % len(ref))):
            raise ShapeMismatch(f"concat: {tuple(ref)} and {tuple(other)} differ outside dim {dim}")
    return torch.cat(parts, dim=dim)


def slice_(x: Tensor, dim: int, start: int, stop: int) -> Tensor:
    if not 0 <= start <= stop <= x.shape[dim]:
        raise ShapeMismatch(f"slice: [{start}:{stop}] out of range for dim {dim} of {_shape(x)}")
    return x.narrow(dim, start, stop - start)


def transpose(x: Tensor, d0: int = -2, d1: int = -1) -> Tensor:
    return x.transpose(d0, d1)


def scale(x: Tensor, s: float) -> Tensor:
    return x * s


def tanh(x: Tensor) -> Tensor:
    return torch.tanh(x)


def relu(x: Tensor) -> Tensor:
    return torch.relu(x)


def log(x: Tensor) -> Tensor:
    return torch.log(x)


def masked_fill(x: Tensor, mask: Tensor) -> Tensor:
    """Set entries where ``mask`` is False (unavailable) to the sentinel."""
    if _shape(mask) != _shape(x):
        raise ShapeMismatch(f"masked_fill: mask {_shape(mask)} vs values {_shape(x)}")
    return x.masked_fill(~mask, NEG_INF)


def softmax(x: Tensor) -> Tensor:
    return torch.softmax(x, dim=-1)


def log_softmax(x: Tensor) -> Tensor:
    return torch.log_softmax(x, dim=-1)


def mean(x: Tensor, dim: int) -> Tensor:
    return x.mean(dim=dim)


def gather(x: Tensor, index: Tensor, dim: int = -1) -> Tensor:
    if index.dim() != x.dim():
        raise ShapeMismatch(f"gather: index {_shape(index)} rank differs from {_shape(x)}")
    return torch.gather(x, dim, index)


def instance_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalize each feature over the token axis (-2), then scale and shift.

    x: (..., tokens, features); weight, bias: (features,)
    """
    if weight.shape[-1] != x.shape[-1] or bias.shape[-1] != x.shape[-1]:
        raise ShapeMismatch(f"instance_norm: affine {_shape(weight)} vs input {_shape(x)}")
    mu = x.mean(dim=-2, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-2, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * weight + bias


def backward(loss: Tensor) -> None:
    if loss.numel() != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {_shape(loss)}")
    loss.backward()


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    """Thin holder around ``torch.optim.Adam`` (moments live in ``optimizer.state``)."""

    optimizer: torch.optim.Adam

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    @property
    def step_count(self) -> int:
        st = next(iter(self.optimizer.state.values()), None)
        return int(st["step"]) if st else 0


def make_adam(params: Iterable[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    return AdamState(torch.optim.Adam(list(params), lr=lr, betas=betas, eps=eps, foreach=False))


def adam_step(params: list[Tensor], grads: list[Tensor] | None, state: AdamState) -> None:
    """One Adam update in place. ``grads=None`` uses the ``.grad`` already on each param."""
    if grads is not None:
        if len(grads) != len(params):
            raise ShapeMismatch(f"adam_step: {len(params)} params but {len(grads)} grads")
        for p, g in zip(params, grads):
            if _shape(p) != _shape(g):
                raise ShapeMismatch(f"adam_step: grad {_shape(g)} vs param {_shape(p)}")
            p.grad = g.detach().clone()
    state.optimizer.step()


# ---------------------------------------------------------------- checkpoints

def save_params(path, params: Mapping[str, Tensor], meta: Mapping | None = None) -> Path:
    """Write named parameters as ``.npz`` with a JSON header entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
              "names": list(params), "shapes": [list(v.shape) for v in params.values()], "meta": dict(meta or {})}
    arrays = {f"p{i}": v.detach().cpu().numpy().astype(np.float64) for i, v in enumerate(params.values())}
    with path.open("wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    return path


def load_params(path, expected: Mapping[str, tuple] | None = None) -> tuple[dict[str, Tensor], dict]:
    """Read a checkpoint -> (name -> tensor, meta). Validates names/shapes against ``expected``."""
    with np.load(Path(path)) as z:
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
        params = {name: torch.from_numpy(z[f"p{i}"].copy()) for i, name in enumerate(header["names"])}
    if expected is not None:
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        if missing or extra:
            raise ShapeMismatch(f"checkpoint names differ: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, shp in expected.items():
            if tuple(params[name].shape) != tuple(shp):
                raise ShapeMismatch(f"checkpoint {name}: shape {tuple(params[name].shape)} vs expected {tuple(shp)}")
    return params, header.get("meta", {})


# ---------------------------------------------------------------- gradient check

def finite_difference_grads(fn: Callable[[], Tensor], params: list[Tensor], h: float = 1e-5) -> list[Tensor]:
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``params`` (no autograd used)."""
    out = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = fn().item()
                flat[i] = old - h
                down = fn().item()
                flat[i] = old
                gflat[i] = (up - down) / (2 * h)
            out.append(g)
    return out


def relative_error(a: Tensor, b: Tensor, floor: float = 1e-6) -> Tensor:
    """Elementwise |a-b| / max(|a|, |b|, floor)."""
    return (a - b).abs() / torch.clamp(torch.maximum(a.abs(), b.abs()), min=floor)
