"""Hard saliency thresholding with a straight-through gradient, and the
foreground/background token split.

The straight-through surrogate is S + stop_grad(M - S): forward value is the
hard mask M exactly, backward is the identity into S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import DimMismatch
from .tensor import Tensor


@dataclass
class SaliencyMask:
    hard: np.ndarray     # B x N x 1, values in {0, 1}
    soft: Tensor         # straight-through tensor; forward == hard
    scores: Tensor       # the S it was derived from

    @property
    def fraction_positive(self) -> float:
        return float(self.hard.mean(dtype=np.float64))


def binarize(scores: Tensor) -> SaliencyMask:
    """Hard mask M_i = 1 iff S_i > 0 (strictly); gradient passes straight
    through to S."""
    hard = (scores.data > 0.0).astype(np.float32)
    soft = T.add(scores, T.stop_grad(T.sub(Tensor(hard), scores)))
    return SaliencyMask(hard=hard, soft=soft, scores=scores)


def split(tokens: Tensor, mask: SaliencyMask):
    """Row-wise gate: V_fore = M ⊙ V, V_back = (1 - M) ⊙ V. Both keep full
    length; gated-out rows are exactly zero."""
    b, n, d = tokens.shape
    if mask.soft.shape != (b, n, 1):
        raise DimMismatch(f"split: mask {mask.soft.shape} vs tokens {tokens.shape}")
    m = T.broadcast_to(mask.soft, (b, n, d))
    inv = T.broadcast_to(T.add_scalar(T.mul_scalar(mask.soft, -1.0), 1.0), (b, n, d))
    return T.mul(m, tokens), T.mul(inv, tokens)
