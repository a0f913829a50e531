"""Saliency-scoring token pruner: a learnable query token, one full-attention
decoder layer, and an affine D -> 1 scorer over query-fused tokens."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import DimMismatch, LayerParams, decoder_layer, init_layer
from .tensor import Tensor


@dataclass
class PrunerConfig:
    hidden_dim: int = 64
    intermediate: int = 256
    n_heads: int = 4
    seed: int = 0


@dataclass
class PrunerParams:
    query: Tensor            # 1 x D
    layer: LayerParams
    scorer_w: Tensor         # D x 1
    scorer_b: Tensor         # 1

    def named(self):
        yield "pruner/query", self.query
        yield from self.layer.named("pruner/layer")
        yield "pruner/scorer_w", self.scorer_w
        yield "pruner/scorer_b", self.scorer_b

    def tensors(self):
        return [t for _, t in self.named()]


def init_pruner(cfg: PrunerConfig) -> PrunerParams:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.hidden_dim
    return PrunerParams(
        query=Tensor(rng.standard_normal((1, d)) * 0.02, requires_grad=True),
        layer=init_layer(d, cfg.intermediate, cfg.n_heads, rng),
        scorer_w=Tensor(rng.standard_normal((d, 1)) * 0.02, requires_grad=True),
        scorer_b=Tensor(np.zeros(1), requires_grad=True),
    )


def pruner_forward(tokens_with_pos: Tensor, params: PrunerParams):
    """Run [query, tokens] through the layer.

    tokens_with_pos: B x N x D (position embeddings already added).
    Returns (q_star: B x 1 x D, v_star: B x N x D).
    """
    b, n, d = tokens_with_pos.shape
    if d != params.query.shape[1]:
        raise DimMismatch(f"token width {d} != query width {params.query.shape[1]}")
    q = T.broadcast_to(T.reshape(params.query, (1, 1, d)), (b, 1, d))
    x = T.concat([q, tokens_with_pos], axis=1)
    out = decoder_layer(x, params.layer)
    return T.narrow(out, 1, 0, 1), T.narrow(out, 1, 1, n)


def score(q_star: Tensor, v_star: Tensor, params: PrunerParams) -> Tensor:
    """Saliency scores S: B x N x 1, affine map of the query-fused tokens
    (elementwise product of each token with the evolved query)."""
    b, n, d = v_star.shape
    if q_star.shape != (b, 1, d):
        raise DimMismatch(f"score: q_star {q_star.shape} vs v_star {v_star.shape}")
    fused = T.mul(v_star, T.broadcast_to(q_star, (b, n, d)))
    s = T.matmul(fused, params.scorer_w)
    return T.add(s, T.broadcast_to(T.reshape(params.scorer_b, (1, 1, 1)), (b, n, 1)))


def saliency(tokens_with_pos: Tensor, params: PrunerParams) -> Tensor:
    q_star, v_star = pruner_forward(tokens_with_pos, params)
    return score(q_star, v_star, params)


def param_count(params: PrunerParams) -> dict:
    """Exact learnable-scalar count, broken down per component."""
    query = params.query.size
    layer = sum(t.size for t in params.layer.tensors())
    scorer = params.scorer_w.size + params.scorer_b.size
    return {"query": query, "layer": layer, "scorer": scorer,
            "total": query + layer + scorer}


def param_count_formula(d: int, intermediate: int) -> int:
    """Closed form matching init_pruner's tensor inventory; used as an
    independent cross-check and for extrapolating to large dims."""
    attn = 4 * d * d
    norms = 4 * d
    mlp = 3 * d * intermediate
    return d + (attn + norms + mlp) + (d + 1)
