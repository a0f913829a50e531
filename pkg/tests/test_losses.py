import numpy as np
import pytest

from reconprune import tensor as T
from reconprune.losses import (
    ImageTooSmall,
    LossConfig,
    masked_targets,
    mse,
    ssim,
    stream_loss,
    total_loss,
)
from reconprune.tensor import ShapeMismatch, Tensor
from fdcheck import check_grads
from ssim_reference import ssim_reference

rng = np.random.default_rng(41)
CFG = LossConfig()


def imgs(b=1, h=16, w=16):
    return rng.uniform(size=(b, h, w, 3)).astype(np.float32)


# -------------------------------------------------------------------- MSE


def test_mse_self_zero():
    x = Tensor(imgs())
    assert mse(x, x).item() == 0.0


def test_mse_constant_offset():
    a = Tensor(np.zeros((1, 8, 8, 3)))
    b = Tensor(np.full((1, 8, 8, 3), 0.5))
    assert mse(a, b).item() == pytest.approx(0.25, abs=1e-7)


def test_mse_against_loop_oracle():
    a, b = imgs(), imgs()
    naive = 0.0
    for x, y in zip(a.reshape(-1).astype(np.float64), b.reshape(-1).astype(np.float64)):
        naive += (x - y) ** 2
    naive /= a.size
    assert mse(Tensor(a), Tensor(b)).item() == pytest.approx(naive, abs=1e-6)


def test_mse_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mse(Tensor(imgs(h=8, w=8)), Tensor(imgs()))


# -------------------------------------------------------------------- SSIM


def test_ssim_self_is_one():
    x = Tensor(imgs())
    assert ssim(x, x, CFG).item() == pytest.approx(1.0, abs=1e-6)


def test_ssim_constant_images():
    a = Tensor(np.full((1, 12, 12, 3), 0.3))
    assert ssim(a, Tensor(np.full((1, 12, 12, 3), 0.3)), CFG).item() == pytest.approx(1.0, abs=1e-6)


def test_ssim_constant_limit_against_reference():
    a = np.zeros((1, 12, 12, 3), dtype=np.float32)
    b = np.ones((1, 12, 12, 3), dtype=np.float32)
    ref = ssim_reference(a[0], b[0])
    got = ssim(Tensor(a), Tensor(b), CFG).item()
    assert got == pytest.approx(ref, abs=1e-5)
    # analytic constant-limit value: (2*0*1 + C1) * C2 / ((0 + 1 + C1) * C2)
    c1 = 0.01**2
    assert got == pytest.approx(c1 / (1 + c1), abs=1e-6)


def test_ssim_random_pairs_against_reference():
    for _ in range(5):
        a, b = imgs(h=14, w=14), imgs(h=14, w=14)
        ref = ssim_reference(a[0], b[0])
        assert ssim(Tensor(a), Tensor(b), CFG).item() == pytest.approx(ref, abs=1e-5)


def test_ssim_symmetry_and_bounds():
    for _ in range(10):
        a, b = Tensor(imgs()), Tensor(imgs())
        s1 = ssim(a, b, CFG).item()
        s2 = ssim(b, a, CFG).item()
        assert abs(s1 - s2) < 1e-6
        assert -1.0 <= s1 <= 1.0


def test_ssim_too_small():
    with pytest.raises(ImageTooSmall):
        ssim(Tensor(imgs(h=8, w=8)), Tensor(imgs(h=8, w=8)), CFG)


def test_fd_ssim_gradient():
    a = Tensor(imgs(h=12, w=12), requires_grad=True)
    b = Tensor(imgs(h=12, w=12))
    check_grads(lambda: ssim(a, b, CFG), [a], rtol=2e-3, atol=2e-4)


# ------------------------------------------------------------ stream / total


def test_stream_loss_zero_on_identical():
    x = Tensor(imgs())
    assert stream_loss(x, x, CFG).item() == pytest.approx(0.0, abs=1e-6)


def test_stream_loss_endpoints():
    a, b = Tensor(imgs()), Tensor(imgs())
    pure_mse = stream_loss(a, b, LossConfig(lam=0.0)).item()
    assert pure_mse == pytest.approx(mse(a, b).item(), abs=1e-6)
    pure_ssim = stream_loss(a, b, LossConfig(lam=1.0)).item()
    assert pure_ssim == pytest.approx(1.0 - ssim(a, b, CFG).item(), abs=1e-6)


def test_stream_loss_recombination():
    a, b = Tensor(imgs()), Tensor(imgs())
    expect = 0.2 * (1.0 - ssim(a, b, CFG).item()) + 0.8 * mse(a, b).item()
    assert stream_loss(a, b, CFG).item() == pytest.approx(expect, abs=1e-6)


def test_stream_loss_nonnegative():
    for _ in range(10):
        val = stream_loss(Tensor(imgs()), Tensor(imgs()), CFG).item()
        assert val >= 0.0


def test_total_loss_convex_combination():
    c = Tensor([0.37])
    assert total_loss(c, c, LossConfig(alpha=0.81)).item() == pytest.approx(0.37, abs=1e-6)
    assert total_loss(Tensor([0.4]), Tensor([0.2]), LossConfig(alpha=0.5)).item() == pytest.approx(0.3, abs=1e-7)
    assert total_loss(Tensor([0.4]), Tensor([0.9]), LossConfig(alpha=1.0)).item() == pytest.approx(0.4, abs=1e-7)


def test_total_loss_gradient_split():
    lf = Tensor([0.4], requires_grad=True)
    lb = Tensor([0.2], requires_grad=True)
    T.backward(total_loss(lf, lb, CFG))
    assert lf.grad[0] == np.float32(0.5)
    assert lb.grad[0] == np.float32(0.5)


# ----------------------------------------------------------- masked targets


def test_masked_targets_partition():
    im = imgs(b=2)
    mask = (rng.uniform(size=(2, 16, 16)) > 0.5).astype(np.float32)
    fore, back = masked_targets(im, mask)
    np.testing.assert_array_equal(fore.data + back.data, im)


def test_masked_targets_all_ones():
    im = imgs()
    fore, back = masked_targets(im, np.ones((1, 16, 16), dtype=np.float32))
    np.testing.assert_array_equal(fore.data, im)
    np.testing.assert_array_equal(back.data, np.zeros_like(im))


def test_mask_coverage_definition():
    mask = (rng.uniform(size=(1, 16, 16)) > 0.7).astype(np.float32)
    fore, _ = masked_targets(imgs(), mask)
    covered = (fore.data.sum(axis=-1) > 0) | (mask[..., None].squeeze(-1) == 0)
    assert abs(mask.mean() - mask.mean(dtype=np.float64)) < 1e-6


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(lam=1.5)
    with pytest.raises(ValueError):
        LossConfig(ssim_window=4)
