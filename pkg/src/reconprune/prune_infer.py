"""Inference-time Top-K token pruning.

Keeps the floor(N * (1 - p)) highest-saliency tokens, ties broken toward the
lower original index, and preserves original token order (and position
embeddings) in the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PrunedSequence:
    tokens: np.ndarray        # M x D
    pos_embed: np.ndarray     # M x D
    kept_indices: np.ndarray  # M ascending original indices
    ratio: float


def retained_count(n: int, p: float) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"pruning ratio must be in [0, 1], got {p}")
    return int(np.floor(n * (1.0 - p)))


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores, ties to the lower index, returned in
    ascending index order."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    # stable sort on (-score) keeps lower indices first within ties
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


def prune(tokens: np.ndarray, pos_embed: np.ndarray, scores: np.ndarray,
          p: float, k_override: int | None = None) -> PrunedSequence:
    tokens = np.asarray(tokens)
    n = tokens.shape[0]
    scores = np.asarray(scores).reshape(-1)
    if scores.shape[0] != n:
        raise ValueError(f"scores length {scores.shape[0]} != token count {n}")
    m = retained_count(n, p) if k_override is None else int(k_override)
    kept = top_k_indices(scores, m)
    return PrunedSequence(
        tokens=tokens[kept].copy(),
        pos_embed=np.asarray(pos_embed)[kept].copy(),
        kept_indices=kept,
        ratio=p,
    )


def downstream_stub(pruned: PrunedSequence, text_len: int) -> dict:
    """Layout descriptor for the downstream sequence consumer: retained
    visual tokens first, then text slots."""
    m = len(pruned.kept_indices)
    return {
        "total_len": m + text_len,
        "visual_len": m,
        "text_len": text_len,
        "slots": ["visual"] * m + ["text"] * text_len,
    }


def dump_pruned(pruned: PrunedSequence, scores: np.ndarray, n: int) -> dict:
    """JSON-ready inspection record."""
    return {
        "n": int(n),
        "m": int(len(pruned.kept_indices)),
        "p": float(pruned.ratio),
        "kept_indices": [int(i) for i in pruned.kept_indices],
        "scores": [float(s) for s in np.asarray(scores).reshape(-1)],
    }
