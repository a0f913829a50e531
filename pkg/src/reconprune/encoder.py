"""Frozen vision-encoder stand-in.

Tokens are a fixed seeded Gaussian projection of flattened patches (never
trained), plus 2-D sinusoidal position embeddings kept separate so downstream
stages can re-inject them where needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class BadImageSize(ValueError):
    pass


class BadMaskSize(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 96
    patch_size: int = 8
    hidden_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise BadImageSize(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_tokens(self) -> int:
        return self.grid * self.grid


@dataclass
class TokenSequence:
    tokens: Tensor      # N x D, frozen (no grad)
    pos_embed: Tensor   # N x D
    grid_coords: np.ndarray  # N x 2 (row, col), row-major


def sincos_pos_embed(grid: int, dim: int) -> np.ndarray:
    """2-D sinusoidal position embeddings, one row per patch in row-major
    order. Half the channels encode the row index, half the column."""
    if dim % 4 != 0:
        raise BadImageSize(f"hidden_dim {dim} must be divisible by 4")
    half = dim // 2
    omega = 1.0 / (10000.0 ** (np.arange(half // 2, dtype=np.float64) / (half // 2)))
    coords = np.arange(grid, dtype=np.float64)
    args = np.outer(coords, omega)  # grid x half/2
    emb_1d = np.concatenate([np.sin(args), np.cos(args)], axis=1)  # grid x half
    rows = np.repeat(emb_1d, grid, axis=0)
    cols = np.tile(emb_1d, (grid, 1))
    return np.concatenate([rows, cols], axis=1).astype(np.float32)


class FrozenEncoder:
    """Deterministic in (image, cfg); parameters are drawn once from the
    config seed and never updated."""

    def __init__(self, cfg: EncoderConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        patch_dim = 3 * cfg.patch_size * cfg.patch_size
        self.proj = (rng.standard_normal((patch_dim, cfg.hidden_dim)) / np.sqrt(patch_dim)).astype(np.float32)
        self.bias = (rng.standard_normal(cfg.hidden_dim) * 0.02).astype(np.float32)
        self._pos = sincos_pos_embed(cfg.grid, cfg.hidden_dim)

    def patchify(self, image: np.ndarray) -> np.ndarray:
        """H x W x 3 -> N x (3 * p * p), patches enumerated row-major."""
        p, g = self.cfg.patch_size, self.cfg.grid
        if image.shape != (self.cfg.image_size, self.cfg.image_size, 3):
            raise BadImageSize(f"expected {self.cfg.image_size}^2 x3 image, got {image.shape}")
        x = image.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4)
        return np.ascontiguousarray(x.reshape(g * g, p * p * 3), dtype=np.float32)

    def encode(self, image: np.ndarray) -> TokenSequence:
        tokens = self.patchify(image) @ self.proj + self.bias
        g = self.cfg.grid
        coords = np.stack(np.meshgrid(np.arange(g), np.arange(g), indexing="ij"), axis=-1)
        return TokenSequence(
            tokens=Tensor(tokens),
            pos_embed=Tensor(self._pos.copy()),
            grid_coords=coords.reshape(-1, 2),
        )

    def encode_batch(self, images: np.ndarray) -> np.ndarray:
        """B x H x W x 3 -> B x N x D raw token array (no pos embed)."""
        return np.stack([self.patchify(im) @ self.proj + self.bias for im in images])

    def token_foreground_truth(self, mask: np.ndarray, theta_fg: float = 0.25) -> np.ndarray:
        """Token i is foreground iff its patch's foreground pixel fraction
        reaches theta_fg."""
        if not 0.0 < theta_fg <= 1.0:
            raise ValueError(f"theta_fg must be in (0, 1], got {theta_fg}")
        s, p, g = self.cfg.image_size, self.cfg.patch_size, self.cfg.grid
        if mask.shape != (s, s):
            raise BadMaskSize(f"expected {s}x{s} mask, got {mask.shape}")
        frac = mask.reshape(g, p, g, p).mean(axis=(1, 3), dtype=np.float64)
        return (frac.reshape(-1) >= theta_fg)
