import numpy as np
import pytest

from spheredepth import autodiff as ad
from spheredepth.autodiff import Tensor
from spheredepth.errors import DimensionError
from spheredepth.posenet import (POSE_OUTPUT_SCALE, PoseNet, exp_map, exp_map_np,
                                 log_map_rotation)


def _rodrigues_oracle(omega):
    """Independent closed-form Rodrigues for the tests."""
    theta = np.linalg.norm(omega)
    K = np.array([[0, -omega[2], omega[1]],
                  [omega[2], 0, -omega[0]],
                  [-omega[1], omega[0], 0]])
    if theta < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + np.sin(theta) / theta * K \
        + (1 - np.cos(theta)) / theta ** 2 * (K @ K)


def test_exp_map_zero_is_identity():
    R, t = exp_map(Tensor(np.zeros(6)))
    assert np.allclose(R.data, np.eye(3))
    assert np.allclose(t.data, 0.0)


def test_exp_map_matches_rodrigues():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(6)
        R, t = exp_map(Tensor(v))
        assert np.allclose(R.data, _rodrigues_oracle(v[:3]), atol=1e-12)
        assert np.allclose(t.data, v[3:])
        assert np.allclose(R.data.T @ R.data, np.eye(3), atol=1e-12)


def test_exp_map_small_angle_continuity():
    # the series branch must join the exact branch smoothly
    axis = np.array([0.6, -0.8, 0.0])
    for eps in (1e-8, 1e-4, 2e-3):
        v = np.concatenate([axis * eps, np.zeros(3)])
        R, _ = exp_map(Tensor(v))
        assert np.allclose(R.data, _rodrigues_oracle(axis * eps), atol=1e-12)


def test_exp_map_shape_guard():
    with pytest.raises(DimensionError):
        exp_map(Tensor(np.zeros(5)))


def test_exp_map_np_returns_valid_pose():
    pose = exp_map_np(np.array([0.1, 0.2, -0.3, 1.0, 2.0, 3.0]))
    assert np.allclose(pose.R.T @ pose.R, np.eye(3), atol=1e-12)
    assert np.allclose(pose.t, [1.0, 2.0, 3.0])


def test_log_exp_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        omega = rng.standard_normal(3)
        omega *= rng.uniform(0.01, 3.0) / np.linalg.norm(omega)
        R = _rodrigues_oracle(omega)
        assert np.allclose(log_map_rotation(R), omega, atol=1e-9)
    assert np.allclose(log_map_rotation(np.eye(3)), 0.0)


def test_posenet_forward_shapes():
    net = PoseNet(widths=(4, 8, 8, 8), seed=0)
    x = Tensor(np.random.default_rng(2).uniform(0, 1, (2, 9, 32, 64)).astype(np.float32))
    p_prev, p_next, masks = net.forward(x)
    assert p_prev.data.shape == (2, 6)
    assert p_next.data.shape == (2, 6)
    # stride schedule (1,2,2,2): masks align with the image pyramid scales
    assert [m.data.shape for m in masks] == [
        (2, 1, 32, 64), (2, 1, 16, 32), (2, 1, 8, 16), (2, 1, 4, 8)]
    for m in masks:
        assert np.all((m.data > 0) & (m.data < 1))


def test_posenet_rejects_wrong_channels():
    net = PoseNet(widths=(4, 8, 8, 8), seed=0)
    with pytest.raises(DimensionError):
        net.forward(Tensor(np.zeros((1, 3, 32, 64), dtype=np.float32)))


def test_posenet_outputs_start_small():
    # the output scaling keeps initial motions near the identity warp
    net = PoseNet(widths=(4, 8, 8, 8), seed=3)
    x = Tensor(np.random.default_rng(3).uniform(0, 1, (1, 9, 32, 64)).astype(np.float32))
    p_prev, p_next, _ = net.forward(x)
    assert np.abs(p_prev.data).max() < 100 * POSE_OUTPUT_SCALE
    assert np.abs(p_next.data).max() < 100 * POSE_OUTPUT_SCALE


def test_posenet_pose_gradients_flow():
    net = PoseNet(widths=(4, 8, 8, 8), seed=4)
    x = Tensor(np.random.default_rng(4).uniform(0, 1, (1, 9, 32, 64)).astype(np.float32))
    p_prev, p_next, masks = net.forward(x)
    R, t = exp_map(ad.reshape(p_prev, (6,)))
    loss = ad.add(ad.sum_(R), ad.sum_(t))
    for m in masks:
        loss = ad.add(loss, ad.mean(m))
    loss = ad.add(loss, ad.sum_(p_next))
    ad.backward(loss)
    grads = [p for p in net.parameters() if p.grad is not None]
    assert len(grads) == len(net.parameters())
