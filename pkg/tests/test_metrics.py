import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spheredepth.errors import EmptyBatchError, ValidationError
from spheredepth.metrics import (DELTA_BASE, DEPTH_CUTOFF_M, compute_metrics,
                                 eval_mask, export_pointcloud, mean_metrics,
                                 median_align, read_pointcloud)


def _metrics_oracle(pred, gt, mask):
    """Scalar-loop reimplementation of the whole metric set."""
    ps = [pred[i] for i in np.ndindex(pred.shape) if mask[i]]
    gs = [gt[i] for i in np.ndindex(gt.shape) if mask[i]]
    n = len(ps)
    mae = sum(abs(p - g) for p, g in zip(ps, gs)) / n
    mre = sum(abs(p - g) / g for p, g in zip(ps, gs)) / n
    rmse = (sum((p - g) ** 2 for p, g in zip(ps, gs)) / n) ** 0.5
    rl = (sum((np.log10(p) - np.log10(g)) ** 2 for p, g in zip(ps, gs)) / n) ** 0.5
    deltas = []
    for k in (1, 2, 3):
        deltas.append(sum(1 for p, g in zip(ps, gs)
                          if max(p / g, g / p) < DELTA_BASE ** k) / n)
    return mae, mre, rmse, rl, deltas


def test_compute_metrics_matches_scalar_loop():
    rng = np.random.default_rng(0)
    gt = rng.uniform(0.5, 8.0, (10, 20))
    pred = gt * rng.uniform(0.7, 1.4, (10, 20))
    mask = rng.uniform(0, 1, (10, 20)) > 0.3
    m = compute_metrics(pred, gt, mask)
    mae, mre, rmse, rl, deltas = _metrics_oracle(pred, gt, mask)
    assert np.isclose(m.mae, mae, atol=1e-9)
    assert np.isclose(m.mre, mre, atol=1e-9)
    assert np.isclose(m.rmse, rmse, atol=1e-9)
    assert np.isclose(m.rmse_log10, rl, atol=1e-9)
    assert np.isclose(m.delta1, deltas[0])
    assert np.isclose(m.delta2, deltas[1])
    assert np.isclose(m.delta3, deltas[2])


def test_perfect_prediction():
    gt = np.random.default_rng(1).uniform(1, 5, (4, 8))
    m = compute_metrics(gt.copy(), gt, np.ones_like(gt, dtype=bool))
    assert m.mae == 0.0 and m.rmse == 0.0
    assert m.delta1 == 1.0 and m.delta3 == 1.0


def test_eval_mask_cutoff():
    gt = np.array([[0.5, 10.0, 10.5], [np.inf, -1.0, 0.0]])
    mask = eval_mask(gt)
    assert mask.tolist() == [[True, True, False], [False, False, False]]
    assert DEPTH_CUTOFF_M == 10.0


def test_median_align_lower_middle_rule():
    pred = np.array([1.0, 2.0, 3.0, 4.0])  # even count: lower middle = 2
    gt = np.array([10.0, 20.0, 30.0, 40.0])  # lower middle = 20
    out = median_align(pred, gt, np.ones(4, dtype=bool))
    assert np.allclose(out, pred * 10.0)


def test_median_align_matches_scalar_loop():
    rng = np.random.default_rng(2)
    gt = rng.uniform(1, 5, (6, 12))
    pred = gt * 0.37
    mask = rng.uniform(0, 1, (6, 12)) > 0.4
    out = median_align(pred, gt, mask)
    sp = sorted(pred[mask].tolist())
    sg = sorted(gt[mask].tolist())
    scale = sg[(len(sg) - 1) // 2] / sp[(len(sp) - 1) // 2]
    assert np.allclose(out, pred * scale)
    # after alignment with constant-ratio predictions the medians agree
    assert np.isclose(sorted(out[mask].tolist())[(mask.sum() - 1) // 2],
                      sg[(len(sg) - 1) // 2])


def test_median_align_errors():
    with pytest.raises(EmptyBatchError):
        median_align(np.ones(3), np.ones(3), np.zeros(3, dtype=bool))
    with pytest.raises(ValidationError):
        median_align(np.zeros(3), np.ones(3), np.ones(3, dtype=bool))


def test_compute_metrics_rejects_nonpositive():
    with pytest.raises(ValidationError):
        compute_metrics(np.array([0.0, 1.0]), np.ones(2), np.ones(2, dtype=bool))
    with pytest.raises(EmptyBatchError):
        compute_metrics(np.ones(2), np.ones(2), np.zeros(2, dtype=bool))


def test_mean_metrics():
    gt = np.full((2, 4), 2.0)
    a = compute_metrics(np.full((2, 4), 2.2), gt, np.ones((2, 4), dtype=bool))
    b = compute_metrics(np.full((2, 4), 1.8), gt, np.ones((2, 4), dtype=bool))
    m = mean_metrics([a, b])
    assert np.isclose(m.mae, (a.mae + b.mae) / 2)
    with pytest.raises(EmptyBatchError):
        mean_metrics([])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (30,), elements=st.floats(0.1, 9.9)),
       arrays(np.float64, (30,), elements=st.floats(0.1, 9.9)))
def test_metric_invariants(pred, gt):
    m = compute_metrics(pred, gt, np.ones(30, dtype=bool))
    assert m.mae <= m.rmse + 1e-12
    assert m.delta1 <= m.delta2 <= m.delta3
    assert 0.0 <= m.delta3 <= 1.0
    assert m.mae >= 0.0 and m.rmse >= 0.0


def test_pointcloud_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    depth = rng.uniform(0.5, 5.0, (8, 16))
    rgb = rng.uniform(0, 1, (3, 8, 16))
    path = tmp_path / "cloud.ply"
    n = export_pointcloud(depth, rgb, path)
    assert n == 8 * 16
    pts, colors = read_pointcloud(path)
    assert pts.shape == (n, 3)
    # radii reproduce the depth map (float32 quantization only)
    radii = np.linalg.norm(pts, axis=1).reshape(8, 16)
    assert np.abs(radii - depth).max() < 1e-5
    assert colors.dtype == np.uint8


def test_pointcloud_masking(tmp_path):
    depth = np.ones((4, 8))
    depth[0, 0] = -1.0
    path = tmp_path / "cloud.ply"
    n = export_pointcloud(depth, None, path)
    assert n == 31
    header = path.read_bytes()[:200]
    assert b"binary_little_endian" in header
    assert b"element vertex 31" in header
