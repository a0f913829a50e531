"""MSE, Gaussian-window SSIM, and the composite two-stream loss.

SSIM follows the Wang et al. convention: 11x11 Gaussian window, sigma 1.5,
C1 = (0.01 L)^2, C2 = (0.03 L)^2, dynamic range L = 1 for [0,1] images.
Local statistics use valid windows only, computed per channel and averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeMismatch, Tensor


class ImageTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.2        # SSIM weight inside each stream loss
    alpha: float = 0.5      # foreground-stream weight in the total loss
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0 and 0.0 <= self.alpha <= 1.0):
            raise ValueError("lam and alpha must lie in [0, 1]")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")


def gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    x = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return (k / k.sum()).astype(np.float32)


def _check_images(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ShapeMismatch(f"expected B x H x W x C images, got {a.shape}")


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse: {a.shape} vs {b.shape}")
    return T.tmean(T.square(T.sub(a, b)))


def _blur(x: Tensor, kernel: np.ndarray) -> Tensor:
    return T.conv1d_fixed(T.conv1d_fixed(x, kernel, axis=1), kernel, axis=2)


def ssim(a: Tensor, b: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean local SSIM over all valid window positions and channels."""
    _check_images(a, b)
    if min(a.shape[1], a.shape[2]) < cfg.ssim_window:
        raise ImageTooSmall(f"spatial dims {a.shape[1:3]} below window {cfg.ssim_window}")
    kern = gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    c1 = np.float32((cfg.k1 * cfg.dynamic_range) ** 2)
    c2 = np.float32((cfg.k2 * cfg.dynamic_range) ** 2)

    mu_a = _blur(a, kern)
    mu_b = _blur(b, kern)
    mu_aa = T.square(mu_a)
    mu_bb = T.square(mu_b)
    mu_ab = T.mul(mu_a, mu_b)
    var_a = T.sub(_blur(T.square(a), kern), mu_aa)
    var_b = T.sub(_blur(T.square(b), kern), mu_bb)
    cov = T.sub(_blur(T.mul(a, b), kern), mu_ab)

    num = T.mul(T.add_scalar(T.mul_scalar(mu_ab, 2.0), c1),
                T.add_scalar(T.mul_scalar(cov, 2.0), c2))
    den = T.mul(T.add_scalar(T.add(mu_aa, mu_bb), c1),
                T.add_scalar(T.add(var_a, var_b), c2))
    return T.tmean(T.div(num, den))


def stream_loss(i_gt: Tensor, i_pred: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """lam * (1 - SSIM) + (1 - lam) * MSE for one reconstruction stream."""
    s = T.add_scalar(T.mul_scalar(ssim(i_gt, i_pred, cfg), -1.0), 1.0)
    return T.add(T.mul_scalar(s, cfg.lam), T.mul_scalar(mse(i_gt, i_pred), 1.0 - cfg.lam))


def total_loss(l_fore: Tensor, l_back: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    return T.add(T.mul_scalar(l_fore, cfg.alpha), T.mul_scalar(l_back, 1.0 - cfg.alpha))


def masked_targets(images: np.ndarray, masks: np.ndarray):
    """Zero out background (resp. foreground) pixels of B x H x W x 3 images
    given B x H x W binary masks. Returns fixed (no-grad) target tensors."""
    if images.shape[:3] != masks.shape or images.shape[3:] != (3,):
        raise ShapeMismatch(f"masked_targets: {images.shape} vs {masks.shape}")
    m = masks[..., None].astype(np.float32)
    return Tensor(images * m), Tensor(images * (1.0 - m))
