"""Naive double-precision SSIM reference (Wang et al. 2004 form).

Deliberately structured differently from the package implementation: explicit
2-D window extraction per position, no separable filtering, no autodiff.
"""

import numpy as np


def gaussian_window_2d(window, sigma):
    x = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k2 = np.outer(g, g)
    return k2 / k2.sum()


def ssim_reference(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """a, b: H x W x C float arrays. Mean SSIM over valid positions/channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    assert a.shape == b.shape and a.ndim == 3
    h, w, c = a.shape
    win = gaussian_window_2d(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = []
    for ch in range(c):
        x, y = a[:, :, ch], b[:, :, ch]
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                px = x[i:i + window, j:j + window]
                py = y[i:i + window, j:j + window]
                mx = (win * px).sum()
                my = (win * py).sum()
                vx = (win * px * px).sum() - mx * mx
                vy = (win * py * py).sum() - my * my
                cxy = (win * px * py).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))
