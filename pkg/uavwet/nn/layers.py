"""Dense layers, the similarity-masked attention block, and parameter update rules."""
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from uavwet.common.errors import ShapeError
from uavwet.nn.tensor import Tensor, concat, parameter


class Module:
    """Anything owning named parameter Tensors."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(f"{name}."))
            elif isinstance(val, (list, tuple)):
                for j, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{j}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def load_from(self, other: "Module") -> None:
        """Copy parameter values from a module of identical structure."""
        mine, theirs = self.named_parameters(), other.named_parameters()
        if mine.keys() != theirs.keys():
            raise ShapeError("module structures differ")
        for k, p in mine.items():
            if p.shape != theirs[k].shape:
                raise ShapeError(f"{k}: {p.shape} vs {theirs[k].shape}")
            p.data = theirs[k].data.copy()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(n_in)
        self.W = parameter(rng.uniform(-bound, bound, (n_in, n_out)))
        self.b = parameter(rng.uniform(-bound, bound, (n_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class Mlp(Module):
    """Fully connected stack; `activation` between layers, linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, activation: str = "relu"):
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = tuple(sizes)
        self.activation = activation
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x)
            x = x.relu() if self.activation == "relu" else x.tanh()
        return self.layers[-1](x)


def local_mlp(n_in: int, width: int, n_out: int, rng: np.random.Generator, activation: str = "relu") -> Mlp:
    # input, three hidden, output
    return Mlp([n_in, width, width, width, n_out], rng, activation)


class AttentionBlock(Module):
    def __init__(self, m: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(m)
        self.m = m
        self.W_q = parameter(rng.uniform(-bound, bound, (m, m)))
        self.W_k = parameter(rng.uniform(-bound, bound, (m, m)))
        self.W_v = parameter(rng.uniform(-bound, bound, (m, m)))


def attention_features(o: Tensor, z, blk: AttentionBlock) -> Tensor:
    """o~ = softmax((oWq)(oWk)^T / sqrt(M) * Z) (oWv) + oWv.

    `o` is U x M or batched B x U x M; `z` broadcasts against the U x U logits.
    """
    o = o if isinstance(o, Tensor) else Tensor(o)
    z = np.asarray(z, dtype=float)
    if o.shape[-1] != blk.m:
        raise ShapeError(f"features of width {o.shape[-1]} into attention block of width {blk.m}")
    n = o.shape[-2]
    if z.shape[-2:] != (n, n):
        raise ShapeError(f"similarity matrix {z.shape} does not match {n} agents")
    q = o @ blk.W_q
    k = o @ blk.W_k
    v = o @ blk.W_v
    logits = (q @ k.T) * (1.0 / math.sqrt(blk.m)) * Tensor(z)
    return logits.softmax(axis=-1) @ v + v


class GlobalNet(Module):
    """Attention block, then FC1 per agent, mean over agents, FC2 to a scalar.

    With `action_dim > 0` the attended features are joined with each agent's
    action before FC1 (the Q_G form); otherwise it is the V_G form.
    """

    def __init__(self, m: int, width: int, rng: np.random.Generator, action_dim: int = 0):
        self.m = m
        self.action_dim = action_dim
        self.attn = AttentionBlock(m, rng)
        self.fc1 = Linear(m + action_dim, width, rng)
        self.fc2 = Linear(width, 1, rng)

    def __call__(self, o: Tensor, z, a: Optional[Tensor] = None) -> Tensor:
        """B x U x M features (B x U x U mask) to B x 1 values."""
        if o.ndim != 3:
            raise ShapeError(f"global critic expects B x U x M features, got {o.shape}")
        feats = attention_features(o, z, self.attn)
        if self.action_dim:
            if a is None:
                raise ShapeError("Q_G needs the joint action")
            feats = concat([feats, a], axis=-1)
        hidden = self.fc1(feats).relu().mean(axis=-2)
        return self.fc2(hidden)


# ---- update rules ----

def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    if lr < 0.0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    for p in params:
        if p.grad is not None:
            p.data = p.data - lr * p.grad


def soft_update(target: Module, online: Module, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online."""
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    online_params = online.named_parameters()
    for name, p in target.named_parameters().items():
        src = online_params[name]
        if p.shape != src.shape:
            raise ShapeError(f"{name}: {p.shape} vs {src.shape}")
        p.data = tau * p.data + (1.0 - tau) * src.data


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm > 0.0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Sgd:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        sgd_step(self.params, self.lr)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for j, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[j] = self.b1 * self.m[j] + (1.0 - self.b1) * p.grad
            self.v[j] = self.b2 * self.v[j] + (1.0 - self.b2) * p.grad ** 2
            m_hat = self.m[j] / (1.0 - self.b1 ** self.t)
            v_hat = self.v[j] / (1.0 - self.b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params: Sequence[Tensor], lr: float):
    if kind == "sgd":
        return Sgd(params, lr)
    if kind == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
