import itertools

import numpy as np
import pytest

from reconprune.prune_infer import (
    downstream_stub,
    dump_pruned,
    prune,
    retained_count,
    top_k_indices,
)

rng = np.random.default_rng(51)


def test_table1_retained_counts():
    assert retained_count(3249, 0.25) == 2436
    assert retained_count(3249, 0.5) == 1624
    assert retained_count(3249, 0.75) == 812


def test_identity_selection_at_p0():
    tokens = rng.standard_normal((6, 4))
    pos = rng.standard_normal((6, 4))
    s = rng.standard_normal(6)
    out = prune(tokens, pos, s, 0.0)
    np.testing.assert_array_equal(out.kept_indices, np.arange(6))
    np.testing.assert_array_equal(out.tokens, tokens)
    np.testing.assert_array_equal(out.pos_embed, pos)


def test_p1_empty_but_valid():
    out = prune(rng.standard_normal((5, 3)), rng.standard_normal((5, 3)),
                rng.standard_normal(5), 1.0)
    assert len(out.kept_indices) == 0
    assert out.tokens.shape == (0, 3)


def test_tie_case_against_brute_force():
    s = np.array([0.1, 0.9, 0.9, -1.0, 0.5])
    kept = top_k_indices(s, 3)
    np.testing.assert_array_equal(kept, [1, 2, 4])
    # brute force: among all 3-subsets, pick max total score, ties toward
    # lexicographically smallest index tuple
    best = max(
        itertools.combinations(range(5), 3),
        key=lambda c: (round(sum(s[i] for i in c), 9), tuple(-i for i in c)),
    )
    assert tuple(kept) == tuple(sorted(best))


def test_random_selection_against_brute_force():
    for _ in range(30):
        n = int(rng.integers(3, 12))
        s = rng.integers(-3, 4, size=n).astype(float)  # coarse values force ties
        k = int(rng.integers(0, n + 1))
        kept = top_k_indices(s, k)
        # greedy reference: repeatedly take highest score, lowest index first
        remaining = list(range(n))
        ref = []
        for _ in range(k):
            best = max(remaining, key=lambda i: (s[i], -i))
            ref.append(best)
            remaining.remove(best)
        np.testing.assert_array_equal(kept, sorted(ref))


def test_cut_invariant():
    for _ in range(20):
        s = rng.standard_normal(10)
        kept = top_k_indices(s, 4)
        dropped = np.setdiff1d(np.arange(10), kept)
        if len(set(s)) == 10:  # no ties
            assert s[kept].min() >= s[dropped].max()


def test_monotone_transform_invariance():
    s = rng.standard_normal(20)
    np.testing.assert_array_equal(top_k_indices(s, 7), top_k_indices(2 * s + 1, 7))


def test_original_order_preserved():
    tokens = rng.standard_normal((8, 2))
    out = prune(tokens, tokens, rng.standard_normal(8), 0.5)
    assert (np.diff(out.kept_indices) > 0).all()
    np.testing.assert_array_equal(out.tokens, tokens[out.kept_indices])


def test_prune_idempotent_at_p0():
    tokens = rng.standard_normal((6, 2))
    s = rng.standard_normal(6)
    once = prune(tokens, tokens, s, 0.5)
    again = prune(once.tokens, once.pos_embed, s[once.kept_indices], 0.0)
    np.testing.assert_array_equal(again.tokens, once.tokens)


def test_k_override():
    out = prune(rng.standard_normal((10, 2)), rng.standard_normal((10, 2)),
                rng.standard_normal(10), 0.5, k_override=7)
    assert len(out.kept_indices) == 7


def test_downstream_stub_layout():
    out = prune(rng.standard_normal((3249, 2)), rng.standard_normal((3249, 2)),
                rng.standard_normal(3249), 0.75)
    layout = downstream_stub(out, 64)
    assert layout["total_len"] == 812 + 64
    assert layout["slots"][:812] == ["visual"] * 812
    assert layout["slots"][812:] == ["text"] * 64


def test_stub_text_only_at_p1():
    out = prune(rng.standard_normal((5, 2)), rng.standard_normal((5, 2)),
                rng.standard_normal(5), 1.0)
    layout = downstream_stub(out, 10)
    assert layout["visual_len"] == 0 and layout["total_len"] == 10


def test_dump_schema():
    s = rng.standard_normal(6)
    out = prune(rng.standard_normal((6, 2)), rng.standard_normal((6, 2)), s, 0.5)
    d = dump_pruned(out, s, 6)
    assert set(d) == {"n", "m", "p", "kept_indices", "scores"}
    assert d["m"] == 3 and len(d["scores"]) == 6


def test_bad_ratio():
    with pytest.raises(ValueError):
        retained_count(10, 1.5)
