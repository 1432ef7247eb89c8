"""Training objectives: contrast-aware photometric loss, its unweighted
spherical baseline, the occlusion-mask regularizer, depth smoothness, berHu
supervision, and the combined self-supervised objective.

All losses reduce by per-pixel mean (not the raw per-image sum) so the
weights are resolution independent; the minimizer is unchanged at fixed
resolution.  The local contrast map is a constant in the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, EmptyBatchError

MASK_CLAMP_EPS = 1e-6


@dataclass
class LossWeights:
    w1: float = 0.1   # occlusion-mask regularizer
    w2: float = 0.01  # depth smoothness

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("loss weights must be non-negative")


def local_std(img: np.ndarray, window: int = 5) -> np.ndarray:
    """Per-pixel population standard deviation of the channel-mean intensity
    over a window, longitude-wrapped and latitude-clamped.  Returns [H,W];
    treated as a constant (no gradient) by the losses."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        gray = img
    else:
        gray = img.mean(axis=0)
    r = window // 2
    padded = np.pad(gray, ((r, r), (0, 0)), mode="edge")
    padded = np.pad(padded, ((0, 0), (r, r)), mode="wrap")
    win = sliding_window_view(padded, (window, window))
    return win.std(axis=(-2, -1))


def _photo_residual(i_ref: Tensor, warp_prev: Tensor, warp_next: Tensor) -> Tensor:
    """delta = channel mean of |I - I_prev_hat| + |I - I_next_hat|, shape [H,W]."""
    if warp_prev.data.shape != i_ref.data.shape or warp_next.data.shape != i_ref.data.shape:
        raise DimensionError("photo residual: image/warp shapes disagree")
    d = ad.add(ad.abs_(ad.sub(i_ref, warp_prev)), ad.abs_(ad.sub(i_ref, warp_next)))
    return ad.mean(d, axis=0)


def capl(i_ref, warp_prev: Tensor, warp_next: Tensor, mask: Tensor,
         std_map: np.ndarray) -> Tensor:
    """Contrast-aware photometric loss: mean over pixels of X * sigma * delta.

    The contrast map sigma is detached; gradient flows to the warps and the
    mask only.  Zero-variance reference images give exactly zero loss."""
    i_ref = ad._as_tensor(i_ref)
    delta = _photo_residual(i_ref, warp_prev, warp_next)
    if mask.data.shape != delta.data.shape:
        raise DimensionError(
            f"capl: mask shape {mask.data.shape} != residual {delta.data.shape}")
    sigma = Tensor(np.asarray(std_map, dtype=delta.dtype))
    if sigma.data.shape != delta.data.shape:
        raise DimensionError(
            f"capl: std map shape {sigma.data.shape} != residual {delta.data.shape}")
    return ad.mean(ad.mul(ad.mul(mask, sigma), delta))


def spl(i_ref, warp_prev: Tensor, warp_next: Tensor, mask: Tensor) -> Tensor:
    """Spherical photometric loss: capl with sigma identically 1."""
    i_ref = ad._as_tensor(i_ref)
    delta = _photo_residual(i_ref, warp_prev, warp_next)
    if mask.data.shape != delta.data.shape:
        raise DimensionError(
            f"spl: mask shape {mask.data.shape} != residual {delta.data.shape}")
    return ad.mean(ad.mul(mask, delta))


def mask_bce(mask: Tensor) -> Tensor:
    """Mean of -log(X); penalizes occlusion masks decaying toward zero."""
    clamped = ad.clip(mask, MASK_CLAMP_EPS, 1.0 - MASK_CLAMP_EPS)
    return ad.neg(ad.mean(ad.log(clamped)))


def smooth(depth: Tensor) -> Tensor:
    """Mean over pixels of |forward-diff in u (wrapped)| + |forward-diff in v
    (clamped: last row contributes zero)|."""
    depth = ad._as_tensor(depth)
    if depth.data.ndim != 2:
        raise DimensionError(f"smooth: expected [H,W], got {depth.data.shape}")
    H, W = depth.data.shape
    du = ad.sub(ad.roll(depth, -1, axis=1), depth)
    total = ad.sum_(ad.abs_(du))
    if H > 1:
        dv = ad.sub(ad.slice_(depth, (slice(1, H),)), ad.slice_(depth, (slice(0, H - 1),)))
        total = ad.add(total, ad.sum_(ad.abs_(dv)))
    return ad.mul(total, 1.0 / (H * W))


def berhu(depth: Tensor, depth_gt: np.ndarray, valid_mask: np.ndarray) -> Tensor:
    """Reverse Huber loss, mean over valid pixels.

    The knee c = 0.2 * max|error| is computed from the current batch and is a
    constant in the gradient.  |e| <= c contributes |e|; beyond the knee the
    contribution is (e^2 + c^2) / (2c)."""
    depth = ad._as_tensor(depth)
    depth_gt = np.asarray(depth_gt, dtype=depth.dtype)
    valid = np.asarray(valid_mask, dtype=bool)
    if depth.data.shape != depth_gt.shape or valid.shape != depth_gt.shape:
        raise DimensionError("berhu: prediction/ground-truth/mask shapes disagree")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyBatchError("berhu: no valid pixels")
    err_abs = np.abs(depth.data - depth_gt)
    c = 0.2 * float(err_abs[valid].max())
    e = ad.sub(depth, Tensor(depth_gt))
    abs_e = ad.abs_(e)
    small = (valid & (err_abs <= c)).astype(depth.dtype)
    large = (valid & (err_abs > c)).astype(depth.dtype)
    lin = ad.mul(abs_e, Tensor(small))
    if c > 0:
        quad = ad.mul(ad.mul(ad.add(ad.mul(e, e), c * c), Tensor(large)), 1.0 / (2.0 * c))
        total = ad.add(ad.sum_(lin), ad.sum_(quad))
    else:
        total = ad.sum_(lin)
    return ad.mul(total, 1.0 / n_valid)


def self_supervised_loss(i_refs, warps_prev, warps_next, masks, std_maps, depths,
                         weights: LossWeights = LossWeights(),
                         photometric: str = "capl") -> Tensor:
    """Sum over the four scales of photometric + w1 * mask BCE + w2 * smooth.

    All arguments are length-4 lists (scale 1 first).  ``photometric``
    selects "capl" or the "spl" baseline."""
    seqs = (i_refs, warps_prev, warps_next, masks, std_maps, depths)
    if any(len(s) != 4 for s in seqs):
        raise DimensionError("self_supervised_loss: four scales required")
    total = None
    for s in range(4):
        if photometric == "capl":
            photo = capl(i_refs[s], warps_prev[s], warps_next[s], masks[s], std_maps[s])
        elif photometric == "spl":
            photo = spl(i_refs[s], warps_prev[s], warps_next[s], masks[s])
        else:
            raise ValueError(f"unknown photometric loss {photometric!r}")
        term = photo
        if weights.w1 != 0:
            term = ad.add(term, ad.mul(mask_bce(masks[s]), weights.w1))
        if weights.w2 != 0:
            term = ad.add(term, ad.mul(smooth(depths[s]), weights.w2))
        total = term if total is None else ad.add(total, term)
    return total
