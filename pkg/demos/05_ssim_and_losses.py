"""SSIM and the adversarial stream losses.

Shows how SSIM reacts to noise versus a constant brightness shift, and how
the foreground/background stream losses combine.
"""

import numpy as np

from reconprune.datagen import SceneConfig, generate_scene
from reconprune.losses import LossConfig, masked_targets, mse, ssim, stream_loss, total_loss
from reconprune.tensor import Tensor

rng = np.random.default_rng(3)
pair = generate_scene(SceneConfig(size=64, seed=9), 0)
img = pair.image[None]  # batch of one

x = Tensor(img)
print(f"ssim(x, x)            = {ssim(x, x).item():.6f}")

noisy = np.clip(img + rng.normal(scale=0.08, size=img.shape), 0, 1).astype(np.float32)
shifted = np.clip(img + 0.08, 0, 1).astype(np.float32)
print(f"ssim vs +-8% noise    = {ssim(x, Tensor(noisy)).item():.4f}")
print(f"ssim vs +0.08 shift   = {ssim(x, Tensor(shifted)).item():.4f}  "
      "(structure preserved, so SSIM forgives the shift more than MSE does)")
print(f"mse  vs noise / shift = {mse(x, Tensor(noisy)).item():.5f} / "
      f"{mse(x, Tensor(shifted)).item():.5f}")

# stream loss blends (1 - SSIM) and MSE; the total weighs fore vs back
cfg = LossConfig()  # lam = 0.2, alpha = 0.5
gt_fore, gt_back = masked_targets(img, pair.mask[None])
pred_fore = Tensor(np.clip(gt_fore.data + rng.normal(scale=0.05, size=img.shape), 0, 1)
                   .astype(np.float32))
pred_back = Tensor(np.zeros_like(img))

l_fore = stream_loss(gt_fore, pred_fore, cfg)
l_back = stream_loss(gt_back, pred_back, cfg)
l_all = total_loss(l_fore, l_back, cfg)
print()
print(f"fore stream loss = {l_fore.item():.4f} (near-perfect prediction)")
print(f"back stream loss = {l_back.item():.4f} (all-black prediction)")
print(f"total            = {l_all.item():.4f} "
      f"= {cfg.alpha} * fore + {1 - cfg.alpha} * back")
