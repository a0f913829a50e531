"""Evaluation: does the trained pruner keep foreground tokens?

Retention precision/recall/F1 per pruning ratio against token-level
foreground ground truth, saliency AUROC, and reconstruction PSNR/SSIM for
both streams when decoder parameters are available.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .encoder import FrozenEncoder
from .losses import LossConfig, ssim
from .masking import binarize, split
from .prune_infer import retained_count, top_k_indices
from .pruner import PrunerParams, saliency
from .recon_decoder import DecoderParams, reconstruct_pair
from .tensor import Tensor

DEFAULT_RATIOS = (0.25, 0.5, 0.75)
THETA_SWEEP = (0.05, 0.25, 0.5)
HEADLINE_THETA = 0.25


class SingleClass(ValueError):
    pass


def retention_metrics(kept_indices, gt_foreground) -> dict:
    kept = set(int(i) for i in kept_indices)
    fg = {i for i, is_fg in enumerate(gt_foreground) if is_fg}
    hit = len(kept & fg)
    recall = hit / len(fg) if fg else 1.0
    precision = hit / len(kept) if kept else 1.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) > 0 else 0.0
    return {"recall": recall, "precision": precision, "f1": f1}


def saliency_auroc(scores, gt_foreground) -> float:
    """P(random foreground token outscores a random background token), ties
    counted half. Rank-sum formulation, exact."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    fg = np.asarray(gt_foreground, dtype=bool).reshape(-1)
    n_fg = int(fg.sum())
    n_bg = int((~fg).sum())
    if n_fg == 0 or n_bg == 0:
        raise SingleClass("AUROC needs both foreground and background tokens")
    # mid-ranks handle ties exactly
    order = np.argsort(s, kind="stable")
    ranks = np.empty_like(s)
    sorted_s = s[order]
    i = 0
    r = np.arange(1, len(s) + 1, dtype=np.float64)
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = r[i:j + 1].mean()
        i = j + 1
    rank_sum_fg = ranks[fg].sum()
    return (rank_sum_fg - n_fg * (n_fg + 1) / 2.0) / (n_fg * n_bg)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    err = np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


def evaluate(pruner: PrunerParams, encoder: FrozenEncoder, pairs,
             ratios=DEFAULT_RATIOS, decoder: DecoderParams | None = None,
             loss_cfg: LossConfig = LossConfig()) -> dict:
    """Aggregate metrics over a test set; deterministic in its inputs."""
    n = encoder.cfg.n_tokens
    per_ratio = {p: {"recall": [], "precision": [], "f1": []} for p in ratios}
    sweep = {theta: {"recall": [], "precision": [], "f1": []} for theta in THETA_SWEEP}
    aurocs = []
    mean_fg, mean_bg, frac_pos = [], [], []
    ssim_fore, ssim_back, psnr_fore, psnr_back = [], [], [], []

    pos = None
    for pair in pairs:
        seq = encoder.encode(pair.image)
        pos = seq.pos_embed.data
        x = Tensor((seq.tokens.data + pos)[None])
        s = saliency(x, pruner).data.reshape(-1)
        fg = encoder.token_foreground_truth(pair.mask, HEADLINE_THETA)
        if fg.any() and not fg.all():
            aurocs.append(saliency_auroc(s, fg))
            mean_fg.append(float(s[fg].mean()))
            mean_bg.append(float(s[~fg].mean()))
        frac_pos.append(float((s > 0).mean()))

        for p in ratios:
            kept = top_k_indices(s, retained_count(n, p))
            m = retention_metrics(kept, fg)
            for k, v in m.items():
                per_ratio[p][k].append(v)
        kept_half = top_k_indices(s, retained_count(n, 0.5))
        for theta in THETA_SWEEP:
            fg_t = encoder.token_foreground_truth(pair.mask, theta)
            m = retention_metrics(kept_half, fg_t)
            for k, v in m.items():
                sweep[theta][k].append(v)

        if decoder is not None:
            mask = binarize(Tensor(s.reshape(1, n, 1)))
            fore_t, back_t = split(Tensor(seq.tokens.data[None]), mask)
            pred_f, pred_b = reconstruct_pair(fore_t, back_t, Tensor(pos[None]), decoder)
            m3 = pair.mask[..., None]
            gt_f = pair.image * m3
            gt_b = pair.image * (1.0 - m3)
            ssim_fore.append(ssim(Tensor(gt_f[None]), pred_f, loss_cfg).item())
            ssim_back.append(ssim(Tensor(gt_b[None]), pred_b, loss_cfg).item())
            psnr_fore.append(psnr(gt_f, pred_f.data[0]))
            psnr_back.append(psnr(gt_b, pred_b.data[0]))

    def avg(xs):
        return float(np.mean(xs)) if xs else None

    report = {
        "sample_count": len(pairs),
        "theta_fg_headline": HEADLINE_THETA,
        "retention": {
            str(p): {k: avg(v) for k, v in per_ratio[p].items()} for p in ratios
        },
        "theta_fg_sweep": {
            str(t): {k: avg(v) for k, v in sweep[t].items()} for t in THETA_SWEEP
        },
        "saliency": {
            "auroc": avg(aurocs),
            "mean_fore_score": avg(mean_fg),
            "mean_back_score": avg(mean_bg),
            "fraction_positive": avg(frac_pos),
        },
    }
    if decoder is not None:
        report["reconstruction"] = {
            "ssim_fore": avg(ssim_fore),
            "ssim_back": avg(ssim_back),
            "psnr_fore": avg(psnr_fore),
            "psnr_back": avg(psnr_back),
        }
    return report
