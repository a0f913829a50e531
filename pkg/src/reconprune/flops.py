"""Analytic FLOPs accounting for transformer prefill, pruned vs unpruned.

Convention (stated in all outputs): one multiply-accumulate = 2 FLOPs;
softmax and normalization FLOPs are excluded. Per layer over a sequence of
T tokens with hidden d and MLP intermediate i:

    attention projections (Q, K, V, O):  4 * T * d^2 * 2
    attention scores and values:         2 * T^2 * d * 2
    gated MLP (gate, up, down):          3 * T * d * i * 2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLOP_CONVENTION = "1 multiply-accumulate = 2 FLOPs; softmax/norm excluded"


@dataclass(frozen=True)
class ModelSpec:
    n_layers: int
    hidden: int
    intermediate: int
    n_heads: int
    visual_tokens: int
    text_tokens: int = 0
    vocab: int | None = None

    def __post_init__(self):
        for f in ("n_layers", "hidden", "intermediate", "n_heads"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")

    @property
    def seq_len(self) -> int:
        return self.visual_tokens + self.text_tokens


def layer_prefill_flops(t: int, d: int, i: int) -> int:
    proj = 4 * t * d * d * 2
    attn = 2 * t * t * d * 2
    mlp = 3 * t * d * i * 2
    return proj + attn + mlp


def prefill_flops(spec: ModelSpec) -> int:
    return spec.n_layers * layer_prefill_flops(spec.seq_len, spec.hidden, spec.intermediate)


def pruner_overhead_flops(n_tokens: int, d: int, intermediate: int) -> int:
    """One pruner-layer pass over the query + N tokens, plus the affine
    scorer (D -> 1) over N tokens. Independent of the pruning ratio."""
    t = 1 + n_tokens
    return layer_prefill_flops(t, d, intermediate) + 2 * n_tokens * d


class MatmulCounter:
    """Instrumented dynamic op count: runs real (tiny) matmuls and tallies
    2*m*n*k per product. Independent cross-check of the closed form."""

    def __init__(self):
        self.flops = 0

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        m, k = a.shape[-2], a.shape[-1]
        n = b.shape[-1]
        batch = int(np.prod(a.shape[:-2], dtype=np.int64)) if a.ndim > 2 else 1
        self.flops += 2 * batch * m * n * k
        return a @ b


def instrumented_prefill_flops(spec: ModelSpec, rng=None) -> int:
    """Execute the per-layer matmul sequence the closed form models, counting
    dynamically. Intended for toy specs only."""
    rng = rng or np.random.default_rng(0)
    t, d, i, h = spec.seq_len, spec.hidden, spec.intermediate, spec.n_heads
    dh = d // h

    def w(*shape):
        return rng.standard_normal(shape) / np.sqrt(shape[0])

    c = MatmulCounter()
    x = rng.standard_normal((t, d))
    for _ in range(spec.n_layers):
        q = c.matmul(x, w(d, d)).reshape(t, h, dh).transpose(1, 0, 2)
        k = c.matmul(x, w(d, d)).reshape(t, h, dh).transpose(1, 0, 2)
        v = c.matmul(x, w(d, d)).reshape(t, h, dh).transpose(1, 0, 2)
        scores = c.matmul(q, k.transpose(0, 2, 1))
        out = c.matmul(scores, v).transpose(1, 0, 2).reshape(t, d)
        x = c.matmul(out, w(d, d))
        gate = c.matmul(x, w(d, i))
        up = c.matmul(x, w(d, i))
        x = c.matmul(gate * up, w(i, d))
    return c.flops


def pruning_report(spec_unpruned: ModelSpec, retained: int,
                   pruner_tokens: int | None = None,
                   pruner_hidden: int | None = None,
                   pruner_intermediate: int | None = None) -> dict:
    """Prefill FLOPs before/after pruning plus pruner overhead and ratios."""
    pruned_spec = ModelSpec(
        n_layers=spec_unpruned.n_layers,
        hidden=spec_unpruned.hidden,
        intermediate=spec_unpruned.intermediate,
        n_heads=spec_unpruned.n_heads,
        visual_tokens=retained,
        text_tokens=spec_unpruned.text_tokens,
        vocab=spec_unpruned.vocab,
    )
    unpruned = prefill_flops(spec_unpruned)
    pruned = prefill_flops(pruned_spec)
    overhead = pruner_overhead_flops(
        pruner_tokens if pruner_tokens is not None else spec_unpruned.visual_tokens,
        pruner_hidden if pruner_hidden is not None else spec_unpruned.hidden,
        pruner_intermediate if pruner_intermediate is not None else spec_unpruned.intermediate,
    )
    return {
        "convention": FLOP_CONVENTION,
        "flops_unpruned": unpruned,
        "flops_pruned": pruned,
        "overhead": overhead,
        "ratio": unpruned / pruned,
        "ratio_with_overhead": unpruned / (pruned + overhead),
    }
