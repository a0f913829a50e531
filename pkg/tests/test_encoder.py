import numpy as np
import pytest

from reconprune.encoder import (
    BadImageSize,
    BadMaskSize,
    EncoderConfig,
    FrozenEncoder,
    sincos_pos_embed,
)

rng = np.random.default_rng(7)


def test_token_count():
    cfg = EncoderConfig(image_size=96, patch_size=8, hidden_dim=64)
    assert cfg.n_tokens == 144


def test_bad_image_size_config():
    with pytest.raises(BadImageSize):
        EncoderConfig(image_size=100, patch_size=8)


def test_encode_deterministic():
    cfg = EncoderConfig(seed=3)
    img = rng.uniform(size=(96, 96, 3))
    a = FrozenEncoder(cfg).encode(img)
    b = FrozenEncoder(cfg).encode(img)
    np.testing.assert_array_equal(a.tokens.data, b.tokens.data)
    np.testing.assert_array_equal(a.pos_embed.data, b.pos_embed.data)
    np.testing.assert_array_equal(a.grid_coords, b.grid_coords)


def test_zero_image_gives_bias_only():
    enc = FrozenEncoder(EncoderConfig())
    seq = enc.encode(np.zeros((96, 96, 3)))
    np.testing.assert_allclose(seq.tokens.data, np.broadcast_to(enc.bias, seq.tokens.shape), atol=1e-7)


def test_grid_coords_row_major_bijective():
    seq = FrozenEncoder(EncoderConfig()).encode(np.zeros((96, 96, 3)))
    g = 12
    expect = [(r, c) for r in range(g) for c in range(g)]
    assert [tuple(x) for x in seq.grid_coords] == expect


def test_pos_embed_rows_distinct():
    for g in (4, 12, 64):  # up to N=4096
        pos = sincos_pos_embed(g, 64)
        uniq = np.unique(pos.round(6), axis=0)
        assert uniq.shape[0] == g * g


def test_patchify_locality():
    # changing pixels inside one patch changes only that token
    enc = FrozenEncoder(EncoderConfig())
    img = rng.uniform(size=(96, 96, 3))
    base = enc.encode(img).tokens.data
    img2 = img.copy()
    img2[8:16, 16:24] += 0.1  # patch (1, 2) -> token 14
    mod = enc.encode(img2).tokens.data
    diff = np.abs(mod - base).sum(axis=1)
    assert diff[14] > 0
    assert np.count_nonzero(diff) == 1


def test_foreground_truth_all_and_none():
    enc = FrozenEncoder(EncoderConfig())
    assert enc.token_foreground_truth(np.ones((96, 96)), 1.0).all()
    assert not enc.token_foreground_truth(np.zeros((96, 96)), 0.05).any()


def test_foreground_truth_single_patch():
    enc = FrozenEncoder(EncoderConfig())
    mask = np.zeros((96, 96))
    mask[24:32, 40:48] = 1  # patch (3, 5) -> token 3*12+5
    fg = enc.token_foreground_truth(mask, 0.25)
    assert fg[3 * 12 + 5]
    assert fg.sum() == 1


def test_foreground_truth_monotone_in_theta():
    enc = FrozenEncoder(EncoderConfig())
    mask = (rng.uniform(size=(96, 96)) > 0.6).astype(np.float64)
    prev = None
    for theta in (0.05, 0.25, 0.5, 0.9):
        fg = enc.token_foreground_truth(mask, theta)
        if prev is not None:
            assert not (fg & ~prev).any()  # per-token non-increasing
        prev = fg


def test_bad_mask_size():
    with pytest.raises(BadMaskSize):
        FrozenEncoder(EncoderConfig()).token_foreground_truth(np.zeros((10, 10)))
