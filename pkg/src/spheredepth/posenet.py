"""Pose network and the axis-angle exponential map.

One encoder consumes the 9-channel concatenation of three adjacent panoramas
and emits two 6-DoF motions (backward and forward) plus occlusion masks at
the four pyramid scales.  Stage strides are (1, 2, 2, 2) so the mask scales
line up with the image pyramid.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import PaddingMode, Parameter, Tensor
from .errors import DimensionError
from .depthnet import Conv2d, EncoderStage
from .sphere import PoseSE3

# pose head outputs are scaled by this so warps start near the identity
POSE_OUTPUT_SCALE = 0.1

_SMALL_ANGLE = 1e-6  # threshold on theta^2 for the series branches


def _sinc_theta(t: np.ndarray) -> np.ndarray:
    """sin(sqrt(t))/sqrt(t) as a function of t = theta^2."""
    small = t < _SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    u = np.sqrt(ts)
    return np.where(small, 1.0 - t / 6.0 + t * t / 120.0, np.sin(u) / u)


def _dsinc_theta(t: np.ndarray) -> np.ndarray:
    small = t < _SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    u = np.sqrt(ts)
    exact = (u * np.cos(u) - np.sin(u)) / (2.0 * u ** 3)
    return np.where(small, -1.0 / 6.0 + t / 60.0 - t * t / 1680.0, exact)


def _versine(t: np.ndarray) -> np.ndarray:
    """(1 - cos(sqrt(t)))/t as a function of t = theta^2."""
    small = t < _SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    u = np.sqrt(ts)
    return np.where(small, 0.5 - t / 24.0 + t * t / 720.0, (1.0 - np.cos(u)) / ts)


def _dversine(t: np.ndarray) -> np.ndarray:
    small = t < _SMALL_ANGLE
    ts = np.where(small, 1.0, t)
    u = np.sqrt(ts)
    exact = (u * np.sin(u) / 2.0 - (1.0 - np.cos(u))) / (ts * ts)
    return np.where(small, -1.0 / 24.0 + t / 360.0 - t * t / 13440.0, exact)


def exp_map(v: Tensor):
    """6-vector (axis-angle rotation, translation) -> (R [3,3], t [3]).

    Rodrigues with series expansion near zero angle; differentiable
    throughout, including at ||omega|| -> 0."""
    v = ad._as_tensor(v)
    if v.data.shape != (6,):
        raise DimensionError(f"exp_map: expected shape (6,), got {v.data.shape}")
    wx = ad.slice_(v, slice(0, 1))
    wy = ad.slice_(v, slice(1, 2))
    wz = ad.slice_(v, slice(2, 3))
    t2 = ad.add(ad.add(ad.mul(wx, wx), ad.mul(wy, wy)), ad.mul(wz, wz))
    a = ad.custom_unary(t2, _sinc_theta, _dsinc_theta, "sinc_theta")
    b = ad.custom_unary(t2, _versine, _dversine, "versine")
    zero = Tensor(np.zeros(1, dtype=v.dtype))
    K = ad.reshape(ad.concat([zero, ad.neg(wz), wy,
                              wz, zero, ad.neg(wx),
                              ad.neg(wy), wx, zero], axis=0), (3, 3))
    K2 = ad.matmul(K, K)
    eye = Tensor(np.eye(3, dtype=v.dtype))
    R = ad.add(eye, ad.add(ad.mul(a, K), ad.mul(b, K2)))
    t = ad.slice_(v, slice(3, 6))
    return R, t


def exp_map_np(v: np.ndarray) -> PoseSE3:
    """Numpy convenience wrapper returning a validated PoseSE3."""
    R, t = exp_map(Tensor(np.asarray(v, dtype=np.float64)))
    return PoseSE3(R.data, t.data)


def log_map_rotation(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (used to build pose targets)."""
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    if angle < 1e-12:
        return np.zeros(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return axis / (2.0 * np.sin(angle)) * angle


class PoseNet:
    """Encoder over three concatenated panoramas -> two pose 6-vectors and
    four occlusion masks."""

    def __init__(self, widths=(16, 32, 64, 128), blocks: int = 1, seed: int = 0,
                 dtype=np.float32, prefix: str = "posenet"):
        rng = np.random.default_rng(seed)
        self.stages = []
        cin = 9
        strides = (1, 2, 2, 2)
        for s in range(4):
            self.stages.append(EncoderStage(f"{prefix}.stage{s + 1}", cin, widths[s],
                                            blocks, strides[s], PaddingMode.WRAP,
                                            rng, dtype))
            cin = widths[s]
        self.pose_head = Conv2d(f"{prefix}.pose_head", widths[3], 12, 1, 1,
                                PaddingMode.ZERO, rng, dtype)
        self.mask_heads = [Conv2d(f"{prefix}.mask_head{s + 1}", widths[s], 1, 3, 1,
                                  PaddingMode.WRAP, rng, dtype)
                           for s in range(4)]

    def parameters(self) -> list[Parameter]:
        out = []
        for s in self.stages:
            out += s.parameters()
        out += self.pose_head.parameters()
        for h in self.mask_heads:
            out += h.parameters()
        return out

    def forward(self, triplet: Tensor):
        """triplet [N,9,H,W] -> (pose_prev [N,6], pose_next [N,6],
        masks [X1..X4], each [N,1,h,w] in (0,1))."""
        if triplet.data.ndim != 4 or triplet.data.shape[1] != 9:
            raise DimensionError(
                f"posenet: expected [N,9,H,W], got {triplet.data.shape}")
        feats = []
        x = triplet
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        masks = [ad.sigmoid(h(f)) for h, f in zip(self.mask_heads, feats)]
        pooled = ad.mean(ad.mean(feats[3], axis=3), axis=2)  # [N,C]
        N, C = pooled.data.shape
        vec = self.pose_head(ad.reshape(pooled, (N, C, 1, 1)))
        vec = ad.mul(ad.reshape(vec, (N, 12)), POSE_OUTPUT_SCALE)
        pose_prev = ad.slice_(vec, (slice(None), slice(0, 6)))
        pose_next = ad.slice_(vec, (slice(None), slice(6, 12)))
        return pose_prev, pose_next, masks
