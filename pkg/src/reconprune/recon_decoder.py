"""Reconstruction decoder: six full-attention decoder layers plus an affine
per-token head predicting one RGB patch, unpatchified into a full image.

One decoder serves both the foreground and background streams; it exists only
for training and is dropped at inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import DimMismatch, LayerParams, decoder_layer, init_layer
from .tensor import Tensor

N_LAYERS = 6


@dataclass
class DecoderConfig:
    hidden_dim: int = 64
    intermediate: int = 256
    n_heads: int = 4
    patch_size: int = 8
    grid: int = 12
    seed: int = 1


@dataclass
class DecoderParams:
    layers: list[LayerParams]
    head_w: Tensor   # D x (3 * p^2)
    head_b: Tensor   # 3 * p^2
    patch_size: int
    grid: int

    def named(self):
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"decoder/layer{i}")
        yield "decoder/head_w", self.head_w
        yield "decoder/head_b", self.head_b

    def tensors(self):
        return [t for _, t in self.named()]


def init_decoder(cfg: DecoderConfig) -> DecoderParams:
    rng = np.random.default_rng(cfg.seed)
    d, out = cfg.hidden_dim, 3 * cfg.patch_size**2
    return DecoderParams(
        layers=[init_layer(d, cfg.intermediate, cfg.n_heads, rng) for _ in range(N_LAYERS)],
        head_w=Tensor(rng.standard_normal((d, out)) * 0.02, requires_grad=True),
        head_b=Tensor(np.zeros(out), requires_grad=True),
        patch_size=cfg.patch_size,
        grid=cfg.grid,
    )


def unpatchify(per_patch: Tensor, grid: int, patch: int) -> Tensor:
    """B x N x (3 p^2) -> B x H x W x 3, patches in grid row-major order.
    Pure rearrangement (bijective)."""
    b, n, f = per_patch.shape
    if n != grid * grid or f != 3 * patch * patch:
        raise DimMismatch(f"unpatchify: shape {per_patch.shape} vs grid {grid}, patch {patch}")
    x = T.reshape(per_patch, (b, grid, grid, patch, patch, 3))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (b, grid * patch, grid * patch, 3))


def patchify_np(images: np.ndarray, grid: int, patch: int) -> np.ndarray:
    """Numpy inverse of unpatchify, for tests and targets."""
    b = images.shape[0]
    x = images.reshape(b, grid, patch, grid, patch, 3).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b, grid * grid, 3 * patch * patch)


def reconstruct(v_masked: Tensor, pos_embed: Tensor, params: DecoderParams) -> Tensor:
    """v_masked: B x N x D gated tokens; positions are re-added so zeroed
    slots stay addressable. Returns B x H x W x 3 (values unconstrained)."""
    b, n, d = v_masked.shape
    if pos_embed.shape != v_masked.shape:
        raise DimMismatch(f"reconstruct: pos {pos_embed.shape} vs tokens {v_masked.shape}")
    x = T.add(v_masked, pos_embed)
    for layer in params.layers:
        x = decoder_layer(x, layer)
    head = T.add(
        T.matmul(x, params.head_w),
        T.broadcast_to(T.reshape(params.head_b, (1, 1, params.head_b.size)),
                       (b, n, params.head_b.size)),
    )
    return unpatchify(head, params.grid, params.patch_size)


def reconstruct_pair(v_fore: Tensor, v_back: Tensor, pos_embed: Tensor,
                     params: DecoderParams):
    """Both streams through the same decoder parameters, batched together
    along the batch axis for one forward pass."""
    b = v_fore.shape[0]
    both = T.concat([v_fore, v_back], axis=0)
    pos2 = T.concat([pos_embed, pos_embed], axis=0)
    out = reconstruct(both, pos2, params)
    return T.narrow(out, 0, 0, b), T.narrow(out, 0, b, b)
