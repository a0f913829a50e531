"""Pre-norm transformer decoder layer with full (non-causal) attention and a
gated SiLU MLP. Shared by the pruner and the reconstruction decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class DimMismatch(T.ShapeMismatch):
    pass


@dataclass
class LayerParams:
    ln1_g: Tensor
    ln1_b: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w_gate: Tensor
    w_up: Tensor
    w_down: Tensor
    n_heads: int

    def named(self, prefix: str):
        for name in ("ln1_g", "ln1_b", "wq", "wk", "wv", "wo",
                     "ln2_g", "ln2_b", "w_gate", "w_up", "w_down"):
            yield f"{prefix}/{name}", getattr(self, name)

    def tensors(self):
        return [t for _, t in self.named("")]


def init_layer(d: int, intermediate: int, n_heads: int, rng: np.random.Generator,
               std: float = 0.02) -> LayerParams:
    if d % n_heads != 0:
        raise DimMismatch(f"hidden dim {d} not divisible by {n_heads} heads")

    def w(shape):
        return Tensor(rng.standard_normal(shape) * std, requires_grad=True)

    return LayerParams(
        ln1_g=Tensor(np.ones(d), requires_grad=True),
        ln1_b=Tensor(np.zeros(d), requires_grad=True),
        wq=w((d, d)), wk=w((d, d)), wv=w((d, d)), wo=w((d, d)),
        ln2_g=Tensor(np.ones(d), requires_grad=True),
        ln2_b=Tensor(np.zeros(d), requires_grad=True),
        w_gate=w((d, intermediate)), w_up=w((d, intermediate)),
        w_down=w((intermediate, d)),
        n_heads=n_heads,
    )


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, t, d = x.shape
    x = T.reshape(x, (b, t, n_heads, d // n_heads))
    return T.transpose(x, (0, 2, 1, 3))  # B x H x T x dh


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def attention(x: Tensor, p: LayerParams) -> Tensor:
    """Full self-attention over a B x T x D sequence."""
    b, t, d = x.shape
    dh = d // p.n_heads
    q = _split_heads(T.matmul(x, p.wq), p.n_heads)
    k = _split_heads(T.matmul(x, p.wk), p.n_heads)
    v = _split_heads(T.matmul(x, p.wv), p.n_heads)
    scores = T.mul_scalar(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    out = T.matmul(T.softmax(scores), v)
    return T.matmul(_merge_heads(out), p.wo)


def gated_mlp(x: Tensor, p: LayerParams) -> Tensor:
    return T.matmul(T.mul(T.silu(T.matmul(x, p.w_gate)), T.matmul(x, p.w_up)), p.w_down)


def decoder_layer(x: Tensor, p: LayerParams) -> Tensor:
    """x: B x T x D -> B x T x D."""
    if x.ndim != 3 or x.shape[-1] != p.wq.shape[0]:
        raise DimMismatch(f"decoder_layer: bad input shape {x.shape}")
    x = T.add(x, attention(T.layer_norm(x, p.ln1_g, p.ln1_b), p))
    x = T.add(x, gated_mlp(T.layer_norm(x, p.ln2_g, p.ln2_b), p))
    return x
