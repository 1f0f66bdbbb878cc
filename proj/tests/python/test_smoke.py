import numpy as np
import pytest

import texanom as ta


def stripes(n=64, angle=0.6, period=8.0, phase=0.0):
    r, c = np.mgrid[0:n, 0:n]
    w = 2 * np.pi / period
    return 0.5 + 0.35 * np.sin(w * (c * np.cos(angle) + r * np.sin(angle)) + phase)


def test_subband_count_and_decompose():
    assert ta.subband_count(4, 3) == 6
    x = np.random.default_rng(0).random((32, 32))
    bands = ta.decompose(x, orientations=4, scales=3)
    assert len(bands) == 6
    assert bands[0].shape == (32, 32) and bands[0].dtype == np.complex128
    assert bands[1].shape == (16, 16)
    assert bands[-1].shape == (8, 8)


def test_adjoint_identity():
    rng = np.random.default_rng(1)
    x = rng.random((32, 32))
    bands = ta.decompose(x, 4, 3)
    g = [rng.normal(size=b.shape) + 1j * rng.normal(size=b.shape) for b in bands]
    lhs = sum(np.real(np.vdot(b, h)) for b, h in zip(bands, g))
    rhs = float(np.sum(x * ta.adjoint(g, 32, 32, 4, 3)))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_cwssim_window_phase_invariance():
    rng = np.random.default_rng(2)
    w = rng.normal(size=49) + 1j * rng.normal(size=49)
    assert ta.cwssim_window(w, w) == pytest.approx(1.0, abs=1e-12)
    assert ta.cwssim_window(w, np.exp(1.3j) * w) == pytest.approx(1.0, abs=1e-12)


def test_cwssim_loss_and_gradient():
    x = stripes(32)
    y = np.clip(x + np.random.default_rng(3).normal(0, 0.05, x.shape), 0, 1)
    assert ta.cwssim_loss(x, x, 4, 3) == pytest.approx(0.0, abs=1e-12)
    loss = ta.cwssim_loss(x, y, 4, 3)
    assert 0.0 < loss < 1.0
    g = ta.cwssim_loss_grad(x, y, 4, 3)
    d = np.zeros_like(y)
    d[7, 11] = 1e-5
    fd = (ta.cwssim_loss(x, y + d, 4, 3) - ta.cwssim_loss(x, y - d, 4, 3)) / 2e-5
    assert g[7, 11] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_metrics():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    assert ta.auc(scores, labels) == pytest.approx(0.75)
    fpr, tpr = ta.roc_curve(scores, labels)
    assert fpr[0] == 0 and tpr[-1] == 1
    assert ta.partial_auc_normalized(scores, labels, 1.0) == pytest.approx(0.75)
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[1:3, 1:3] = 1
    mask[5:7, 5:8] = 1
    labels_grid, sizes = ta.connected_components(mask)
    assert sizes == [4, 6]
    assert labels_grid[1, 1] == 1 and labels_grid[6, 7] == 2


def test_calibration():
    s = np.random.default_rng(4).random(20000)
    gamma = ta.calibrate_threshold(s, 0.05)
    assert abs(ta.empirical_fpr(s, gamma) - 0.05) < 0.005
    with pytest.raises(ta.CalibrationError):
        ta.calibrate_threshold([], 0.05)


def test_train_reconstruct_score(tmp_path):
    images = [stripes(64, phase=p) for p in (0.0, 1.0)]
    model, losses = ta.train(images, [4], epochs=2, patch_count=8, patch_size=32, batch_size=4, seed=1)
    assert len(losses) == 2
    assert ta.default_param_count() == 5573057
    path = tmp_path / "m.cwae"
    model.save(path)
    again = ta.load_model(path)
    assert again.param_count == model.param_count
    recon = ta.reconstruct_full(images[0], again, 32, 16)
    assert recon.shape == (64, 64)
    amap = ta.anomaly_map(images[0], recon, [3], orientations=4)
    assert amap.shape == (64, 64) and np.all(amap >= 0) and np.all(amap <= 1)
    mask = ta.binarize_and_erode(amap, 2.0, 1)
    assert mask.sum() == 0


def test_image_io(tmp_path):
    img = stripes(16)
    ta.save_image(img, tmp_path / "a.png")
    back = ta.load_image(tmp_path / "a.png")
    assert np.max(np.abs(back - img)) <= 1 / 510 + 1e-12
    with pytest.raises(OSError):
        ta.load_image(tmp_path / "missing.png")
