"""Image-level realizations of the coordinate maps: equirect/cubemap
conversion, panorama rotation, multi-scale pyramids, and the differentiable
backward warp used by the photometric losses.

Layout conventions:

* an equirectangular image tensor is [N, C, H, W] with W = 2H;
* a cubemap tensor is [6N, C, w, w], face-major in the fixed face order
  B, D, F, L, R, U (block f holds batch items of face FACE_ORDER[f]).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ValidationError
from .sphere import FACE_ORDER, PixelGrid, PoseSE3, cube_to_equirect_coord, \
    equirect_to_cube_pixel, rotate_sphere


@dataclass
class EquirectImage:
    """Panorama in equirectangular layout; RGB in [0,1] or 1-channel depth."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DimensionError(f"equirect image rank {self.data.ndim}, expected 3 (C,H,W)")
        C, H, W = self.data.shape
        if W != 2 * H:
            raise ValidationError(f"equirect image must be 2:1, got {H}x{W}")

    @property
    def height(self):
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# cached coordinate grids
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _e2c_grids(H: int, w: int):
    """Per-face equirect source pixel coordinates for face pixel centers."""
    grids = []
    grid = PixelGrid(H)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="xy")
    for face in FACE_ORDER:
        theta, phi = cube_to_equirect_coord(face, uu, vv, w)
        gu, gv = grid.to_pixels(theta, phi)
        grids.append(np.stack([gu, gv], axis=-1)[None])  # [1,w,w,2]
    return grids


@lru_cache(maxsize=32)
def _c2e_grids(H: int, w: int):
    """Face assignment mask and in-face source coordinates per equirect pixel."""
    theta, phi = PixelGrid(H).angles()
    face, fu, fv = equirect_to_cube_pixel(theta, phi, w)
    masks, grids = [], []
    for i in range(6):
        masks.append((face == i).astype(np.float64))
        grids.append(np.stack([fu, fv], axis=-1)[None])  # same coords, masked later
    return masks, grids


def e2c(equi: Tensor, w: int) -> Tensor:
    """Equirect [N,C,H,W] -> cubemap [6N,C,w,w] by bilinear resampling."""
    equi = ad._as_tensor(equi)
    if equi.data.ndim != 4:
        raise DimensionError("e2c: expected [N,C,H,W]")
    N, C, H, W = equi.data.shape
    if W != 2 * H:
        raise ValidationError(f"e2c: panorama must be 2:1, got {H}x{W}")
    if w <= 0:
        raise ValidationError("e2c: face side must be positive")
    faces = []
    for g in _e2c_grids(H, w):
        grid = Tensor(np.broadcast_to(g, (N, w, w, 2)).astype(equi.dtype))
        faces.append(ad.grid_sample(equi, grid, wrap_longitude=True))
    return ad.concat(faces, axis=0)


def c2e(cube: Tensor, H: int) -> Tensor:
    """Cubemap [6N,C,w,w] -> equirect [N,C,H,W]; per-face bilinear lookup
    composited with the nearest-face assignment mask."""
    cube = ad._as_tensor(cube)
    if cube.data.ndim != 4 or cube.data.shape[0] % 6 != 0:
        raise DimensionError("c2e: expected [6N,C,w,w] face-major cubemap")
    if cube.data.shape[2] != cube.data.shape[3]:
        raise DimensionError("c2e: faces must be square")
    N = cube.data.shape[0] // 6
    w = cube.data.shape[2]
    masks, grids = _c2e_grids(H, w)
    out = None
    for i in range(6):
        block = ad.slice_(cube, slice(i * N, (i + 1) * N))
        grid = Tensor(np.broadcast_to(grids[i], (N, H, 2 * H, 2)).astype(cube.dtype))
        sampled = ad.grid_sample(block, grid, wrap_longitude=False)
        m = Tensor(masks[i][None, None].astype(cube.dtype))
        term = ad.mul(sampled, ad.reshape(m, (1, 1, H, 2 * H)))
        out = term if out is None else ad.add(out, term)
    return out


def pyramid(img: Tensor, levels: int = 4) -> list[Tensor]:
    """Area-averaged pyramid; level 1 (index 0) is full resolution."""
    img = ad._as_tensor(img)
    H = img.data.shape[-2]
    if H % (1 << (levels - 1)) != 0:
        raise DimensionError(
            f"pyramid: H axis {H} not divisible by {1 << (levels - 1)}")
    out = [img]
    for _ in range(levels - 1):
        out.append(ad.downsample2x(out[-1]))
    return out


def rotate_image(img, R: np.ndarray) -> np.ndarray:
    """Resample a panorama [C,H,W] rotated by R (bilinear, longitude wrap)."""
    img = np.asarray(img)
    C, H, W = img.shape
    grid = PixelGrid(H, W)
    theta, phi = rotate_sphere(R, grid)
    gu, gv = grid.to_pixels(theta, phi)
    g = Tensor(np.stack([gu, gv], axis=-1)[None])
    return ad.grid_sample(Tensor(img[None].astype(np.float64)), g,
                          wrap_longitude=True).data[0]


# ---------------------------------------------------------------------------
# differentiable backward warp
# ---------------------------------------------------------------------------

def _scalar(t: Tensor, key) -> Tensor:
    return ad.slice_(t, key)


def warp_to_reference(target: Tensor, depth_ref: Tensor,
                      pose_R: Tensor, pose_t: Tensor):
    """Synthesize the reference view by sampling the target frame.

    target [C,H,W], depth_ref [H,W]; pose_R/pose_t map reference-camera points
    into the target camera frame.  Returns (warped [C,H,W], valid [H,W] bool).
    Differentiable w.r.t. target, depth, and the pose tensors."""
    target = ad._as_tensor(target)
    depth_ref = ad._as_tensor(depth_ref)
    pose_R = ad._as_tensor(pose_R)
    pose_t = ad._as_tensor(pose_t)
    if target.data.ndim != 3:
        raise DimensionError("warp: target must be [C,H,W]")
    C, H, W = target.data.shape
    if depth_ref.data.shape != (H, W):
        raise DimensionError(
            f"warp: depth shape {depth_ref.data.shape} != image plane ({H}, {W})")
    if np.any(~np.isfinite(depth_ref.data)):
        raise ValidationError("warp: non-finite depth")
    dt = target.dtype
    rays = PixelGrid(H, W).rays().astype(dt)  # [H,W,3]
    rx, ry, rz = (Tensor(rays[..., i]) for i in range(3))

    px = ad.mul(depth_ref, rx)
    py = ad.mul(depth_ref, ry)
    pz = ad.mul(depth_ref, rz)

    def rot_row(i):
        r0 = _scalar(pose_R, (i, 0))
        r1 = _scalar(pose_R, (i, 1))
        r2 = _scalar(pose_R, (i, 2))
        ti = _scalar(pose_t, (i,))
        return ad.add(ad.add(ad.add(ad.mul(r0, px), ad.mul(r1, py)),
                             ad.mul(r2, pz)), ad.reshape(ti, ()))

    qx, qy, qz = rot_row(0), rot_row(1), rot_row(2)
    norm = ad.sqrt(ad.add(ad.add(ad.mul(qx, qx), ad.mul(qy, qy)), ad.mul(qz, qz)))
    theta = ad.atan2(qx, qz)
    # clip the norm away from zero so degenerate rays (zero depth, point on the
    # target center) stay finite; such pixels are masked out of `valid` anyway
    norm_safe = ad.clip(norm, np.finfo(dt).tiny, np.inf)
    phi = ad.asin(ad.clip(ad.div(qy, norm_safe), -1.0, 1.0))

    gx = ad.sub(ad.mul(ad.add(theta, float(np.pi)), W / (2 * np.pi)), 0.5)
    gy = ad.sub(ad.mul(ad.sub(Tensor(np.asarray(np.pi / 2, dtype=dt)), phi),
                       H / np.pi), 0.5)
    # the project/unproject roundtrip leaves ~ulp-level noise on lattice
    # coordinates; snap so an identity-pose warp is exactly the identity
    tol = 1e-9 if dt == np.float64 else 1e-4
    _snap = lambda arr: np.where(np.abs(arr - np.round(arr)) < tol, np.round(arr), arr)
    gx = ad.custom_unary(gx, _snap, np.ones_like, "snap")
    gy = ad.custom_unary(gy, _snap, np.ones_like, "snap")
    grid = ad.concat([ad.reshape(gx, (1, H, W, 1)), ad.reshape(gy, (1, H, W, 1))],
                     axis=3)
    warped = ad.grid_sample(ad.reshape(target, (1, C, H, W)), grid,
                            wrap_longitude=True)
    valid = np.isfinite(norm.data) & (norm.data > 0) & (depth_ref.data > 0)
    return ad.reshape(warped, (C, H, W)), valid
