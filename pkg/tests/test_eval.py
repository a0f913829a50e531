import numpy as np
import pytest

from reconprune.datagen import SceneConfig, generate_dataset
from reconprune.encoder import EncoderConfig, FrozenEncoder
from reconprune.eval import (
    SingleClass,
    evaluate,
    psnr,
    retention_metrics,
    saliency_auroc,
)
from reconprune.prune_infer import retained_count, top_k_indices
from reconprune.pruner import PrunerConfig, init_pruner

rng = np.random.default_rng(61)


def test_retention_exact_match():
    m = retention_metrics([0, 1], [True, True, False, False])
    assert m == {"recall": 1.0, "precision": 1.0, "f1": 1.0}


def test_retention_disjoint():
    m = retention_metrics([2, 3], [True, True, False, False])
    assert m == {"recall": 0.0, "precision": 0.0, "f1": 0.0}


def test_retention_hand_count():
    m = retention_metrics([1, 2], [True, True, False, False])
    assert m["recall"] == 0.5 and m["precision"] == 0.5 and m["f1"] == 0.5


def test_retention_empty_edge_cases():
    assert retention_metrics([0], [False, False])["recall"] == 1.0
    assert retention_metrics([], [True, False])["precision"] == 1.0


def test_auroc_perfect_separation():
    s = np.array([1.0, 2.0, -1.0, -2.0])
    assert saliency_auroc(s, [True, True, False, False]) == 1.0


def test_auroc_constant_scores():
    assert saliency_auroc(np.zeros(10), [True] * 4 + [False] * 6) == 0.5


def test_auroc_single_class():
    with pytest.raises(SingleClass):
        saliency_auroc(np.ones(4), [True] * 4)


def test_auroc_against_pairwise_brute_force():
    for _ in range(20):
        s = rng.integers(-3, 4, size=20).astype(float)  # coarse -> ties occur
        fg = rng.uniform(size=20) > 0.5
        if fg.all() or not fg.any():
            continue
        wins = 0.0
        for i in np.flatnonzero(fg):
            for j in np.flatnonzero(~fg):
                wins += 1.0 if s[i] > s[j] else (0.5 if s[i] == s[j] else 0.0)
        expect = wins / (fg.sum() * (~fg).sum())
        assert saliency_auroc(s, fg) == pytest.approx(expect, abs=1e-12)


def test_auroc_monotone_transform_invariant():
    s = rng.standard_normal(30)
    fg = rng.uniform(size=30) > 0.4
    if fg.any() and not fg.all():
        assert saliency_auroc(s, fg) == pytest.approx(
            saliency_auroc(np.exp(2 * s), fg), abs=1e-12)


def test_recall_monotone_in_ratio():
    for _ in range(20):
        s = rng.standard_normal(16)
        fg = rng.uniform(size=16) > 0.5
        prev = None
        for p in (0.0, 0.25, 0.5, 0.75, 1.0):
            kept = top_k_indices(s, retained_count(16, p))
            rec = retention_metrics(kept, fg)["recall"]
            if prev is not None:
                assert rec <= prev + 1e-12
            prev = rec


def test_psnr():
    assert psnr(np.zeros(4), np.zeros(4)) == np.inf
    assert psnr(np.zeros(4), np.full(4, 0.1)) == pytest.approx(20.0, abs=1e-9)


def test_evaluate_untrained_near_chance_and_deterministic():
    enc = FrozenEncoder(EncoderConfig(image_size=32, patch_size=8, hidden_dim=32, seed=0))
    pruner = init_pruner(PrunerConfig(hidden_dim=32, seed=0))
    pairs = generate_dataset(SceneConfig(size=32, seed=5), 48)
    rep1 = evaluate(pruner, enc, pairs)
    rep2 = evaluate(pruner, enc, pairs)
    assert rep1 == rep2
    assert 0.25 <= rep1["saliency"]["auroc"] <= 0.75  # fresh init: near chance
    assert rep1["sample_count"] == 48
    assert set(rep1["retention"]) == {"0.25", "0.5", "0.75"}
    assert set(rep1["theta_fg_sweep"]) == {"0.05", "0.25", "0.5"}


def test_evaluate_p0_recall_one():
    enc = FrozenEncoder(EncoderConfig(image_size=32, patch_size=8, hidden_dim=32))
    pruner = init_pruner(PrunerConfig(hidden_dim=32, seed=1))
    pairs = generate_dataset(SceneConfig(size=32, seed=6), 8)
    rep = evaluate(pruner, enc, pairs, ratios=(0.0,))
    assert rep["retention"]["0.0"]["recall"] == 1.0
