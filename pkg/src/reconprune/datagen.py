"""Procedural image/mask scene generator and the on-disk dataset container.

Scenes are a textured background plus filled geometric foreground objects
(lane-like trapezoids, box-like rectangles, disc "pedestrians") whose union
defines the per-pixel mask exactly. Foreground colors come from a brighter
palette that overlaps the background range per channel, so no single-channel
threshold separates them, but the mean statistics differ enough to give a
pruner a learnable signal.

File format (little-endian): magic "NFGS" | version u32 | count u32 |
size u16 | per record: image u8[size*size*3] (round(pixel*255)) then mask
u8[size*size] in {0,1}. Images dequantize to [0,1] on read.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"NFGS"
VERSION = 1
BACKGROUND_KINDS = ("gradient", "noise-texture", "flat")


class CoverageUnsatisfiable(RuntimeError):
    pass


class BadMagic(ValueError):
    pass


class TruncatedFile(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    size: int = 96
    min_objects: int = 2
    max_objects: int = 6
    coverage_min: float = 0.10
    coverage_max: float = 0.45
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if not (0.0 < self.coverage_min < self.coverage_max < 1.0):
            raise ValueError("coverage bounds must satisfy 0 < lo < hi < 1")


@dataclass
class ImageMaskPair:
    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    mask: np.ndarray   # H x W float32 in {0, 1}


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    kind = BACKGROUND_KINDS[rng.integers(len(BACKGROUND_KINDS))]
    base = rng.uniform(0.15, 0.55, size=3)
    if kind == "flat":
        img = np.broadcast_to(base, (size, size, 3)).copy()
    elif kind == "gradient":
        other = rng.uniform(0.15, 0.55, size=3)
        axis = rng.integers(2)
        t = np.linspace(0.0, 1.0, size)[:, None] if axis == 0 else np.linspace(0.0, 1.0, size)[None, :]
        img = base + t[..., None] * (other - base)
    else:
        img = base + rng.uniform(-0.12, 0.12, size=(size, size, 3))
        # coarse blotches so the texture has spatial structure
        blocks = -(-size // 8)
        coarse = rng.uniform(-0.1, 0.1, size=(blocks, blocks, 3))
        img = img + np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:size, :size]
    return np.clip(img, 0.0, 1.0)


def _fg_color(rng: np.random.Generator) -> np.ndarray:
    # brighter, saturated palette; per-channel range overlaps the background's
    c = rng.uniform(0.45, 0.95, size=3)
    c[rng.integers(3)] = rng.uniform(0.7, 0.98)  # one dominant channel
    return c


def _disc(rng, size, yy, xx):
    cy, cx = rng.uniform(0.1 * size, 0.9 * size, size=2)
    r = rng.uniform(0.05 * size, 0.16 * size)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _rect(rng, size, yy, xx):
    h = rng.uniform(0.1 * size, 0.35 * size)
    w = rng.uniform(0.1 * size, 0.35 * size)
    y0 = rng.uniform(0, size - h)
    x0 = rng.uniform(0, size - w)
    return (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)


def _trapezoid(rng, size, yy, xx):
    # lane-like convex quad: wide at the bottom, narrow near the top
    y_top = rng.uniform(0.1 * size, 0.5 * size)
    y_bot = rng.uniform(y_top + 0.25 * size, size)
    cx = rng.uniform(0.2 * size, 0.8 * size)
    w_top = rng.uniform(0.03 * size, 0.12 * size)
    w_bot = rng.uniform(0.2 * size, 0.45 * size)
    verts = np.array([
        (y_top, cx - w_top), (y_top, cx + w_top),
        (y_bot, cx + w_bot), (y_bot, cx - w_bot),
    ])
    inside = np.ones_like(yy, dtype=bool)
    for i in range(4):
        y0, x0 = verts[i]
        y1, x1 = verts[(i + 1) % 4]
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        inside &= cross <= 0
    return inside


_SHAPES = (_trapezoid, _rect, _disc)


def _draw_scene(rng: np.random.Generator, cfg: SceneConfig) -> ImageMaskPair:
    size = cfg.size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = _background(rng, size)
    mask = np.zeros((size, size), dtype=bool)
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    for _ in range(n_obj):
        shape = _SHAPES[rng.integers(len(_SHAPES))]
        region = shape(rng, size, yy, xx)
        color = _fg_color(rng)
        shade = 1.0 + rng.uniform(-0.15, 0.15, size=(size, size, 1))
        img = np.where(region[..., None], np.clip(color * shade, 0.0, 1.0), img)
        mask |= region
    # snap to the u8 grid used by the container so write/read round-trips
    # are elementwise lossless
    img = np.round(img * 255.0) / 255.0
    return ImageMaskPair(
        image=np.ascontiguousarray(img, dtype=np.float32),
        mask=mask.astype(np.float32),
    )


def generate_scene(cfg: SceneConfig, index: int) -> ImageMaskPair:
    """Deterministic in (cfg.seed, index); redraws until foreground coverage
    lands inside the configured bounds."""
    if cfg.max_objects < 1:
        raise CoverageUnsatisfiable("no objects configured; coverage lower bound unreachable")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    for _ in range(cfg.max_retries):
        pair = _draw_scene(rng, cfg)
        cov = float(pair.mask.mean(dtype=np.float64))
        if cfg.coverage_min <= cov <= cfg.coverage_max:
            return pair
    raise CoverageUnsatisfiable(
        f"coverage bounds [{cfg.coverage_min}, {cfg.coverage_max}] not met "
        f"after {cfg.max_retries} draws (seed={cfg.seed}, index={index})"
    )


def generate_dataset(cfg: SceneConfig, count: int, start_index: int = 0):
    return [generate_scene(cfg, start_index + i) for i in range(count)]


def write_dataset(pairs, path) -> None:
    size = pairs[0].image.shape[0]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIH", VERSION, len(pairs), size))
        for p in pairs:
            img_u8 = np.round(p.image * 255.0).astype(np.uint8)
            f.write(img_u8.tobytes())
            f.write(p.mask.astype(np.uint8).tobytes())


def read_dataset(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r} in {path}")
    if len(blob) < 14:
        raise TruncatedFile(f"{path}: header incomplete")
    version, count, size = struct.unpack("<IIH", blob[4:14])
    if version != VERSION:
        raise BadMagic(f"unsupported version {version}")
    rec = size * size * 4  # 3 image bytes + 1 mask byte per pixel
    if len(blob) - 14 < count * rec:
        raise TruncatedFile(f"{path}: header promises {count} records, payload short")
    pairs = []
    off = 14
    npx = size * size
    for _ in range(count):
        img = np.frombuffer(blob, dtype=np.uint8, count=npx * 3, offset=off)
        off += npx * 3
        mask = np.frombuffer(blob, dtype=np.uint8, count=npx, offset=off)
        off += npx
        pairs.append(ImageMaskPair(
            image=(img.reshape(size, size, 3).astype(np.float32) / 255.0),
            mask=mask.reshape(size, size).astype(np.float32),
        ))
    return pairs


def foreground_background_stats(pairs):
    """Mean pixel intensity inside vs outside the mask, pooled over pairs."""
    fg_sum = bg_sum = fg_n = bg_n = 0.0
    for p in pairs:
        m = p.mask.astype(bool)
        fg_sum += p.image[m].sum(dtype=np.float64)
        fg_n += m.sum() * 3
        bg_sum += p.image[~m].sum(dtype=np.float64)
        bg_n += (~m).sum() * 3
    return fg_sum / max(fg_n, 1), bg_sum / max(bg_n, 1)
