"""Deterministic synthetic panorama source: textured axis-aligned box rooms
rendered to equirectangular RGB with analytic ray-box depth and exact camera
trajectories.  Stands in for video-sequence datasets at desk scale."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .resample import EquirectImage
from .sphere import PixelGrid, PoseSE3

_N_HARMONICS = 3

# wall order: -x, +x, -y, +y, -z, +z
_WALL_NAMES = ("xneg", "xpos", "yneg", "ypos", "zneg", "zpos")


@dataclass
class SceneSpec:
    """Axis-aligned box room centered at the origin.

    ``extents`` are the full side lengths in meters.  Each of the six walls
    carries a band-limited sinusoid texture whose coefficients are drawn from
    ``seed``; ``wall_strengths`` scales the texture contrast per wall (0 gives
    an exactly constant wall, the low-texture stimulus).  An optional interior
    axis-aligned block acts as an occluder."""

    extents: tuple[float, float, float] = (4.0, 3.0, 5.0)
    seed: int = 0
    texture_strength: float = 1.0
    wall_strengths: Optional[tuple[float, ...]] = None
    occluder_center: Optional[tuple[float, float, float]] = None
    occluder_size: Optional[tuple[float, float, float]] = None

    # derived texture coefficients, filled in __post_init__
    _coeffs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if any(e <= 0 for e in self.extents):
            raise ValidationError("scene extents must be positive")
        if self.wall_strengths is None:
            self.wall_strengths = (1.0,) * 6
        if len(self.wall_strengths) != 6:
            raise ValidationError("wall_strengths must have six entries")
        rng = np.random.default_rng(self.seed)
        # per wall, per RGB channel: amplitude, two integer frequencies, phase
        for wall in range(7):  # wall 6 = occluder block texture
            amp = rng.uniform(0.05, 0.15, size=(3, _N_HARMONICS))
            fa = rng.integers(1, 4, size=(3, _N_HARMONICS)).astype(np.float64)
            fb = rng.integers(1, 4, size=(3, _N_HARMONICS)).astype(np.float64)
            phase = rng.uniform(0, 2 * np.pi, size=(3, _N_HARMONICS))
            self._coeffs[wall] = (amp, fa, fb, phase)

    @property
    def half(self) -> np.ndarray:
        return np.asarray(self.extents, dtype=np.float64) / 2.0

    def inside(self, point: np.ndarray, margin: float = 1e-6) -> bool:
        p = np.asarray(point, dtype=np.float64)
        if np.any(np.abs(p) >= self.half - margin):
            return False
        if self.occluder_center is not None:
            c = np.asarray(self.occluder_center)
            s = np.asarray(self.occluder_size) / 2.0
            if np.all(np.abs(p - c) <= s + margin):
                return False
        return True

    def texture(self, wall: int, a: np.ndarray, b: np.ndarray,
                strength: float) -> np.ndarray:
        """RGB texture values at normalized in-plane coordinates, shape
        a.shape + (3,), values in [0, 1]."""
        amp, fa, fb, phase = self._coeffs[wall]
        out = np.empty(a.shape + (3,))
        for c in range(3):
            acc = np.zeros_like(a)
            for k in range(_N_HARMONICS):
                acc += amp[c, k] * np.sin(
                    2 * np.pi * (fa[c, k] * a + fb[c, k] * b) + phase[c, k])
            out[..., c] = 0.5 + strength * acc
        return np.clip(out, 0.0, 1.0)


@dataclass
class FrameRecord:
    rgb: EquirectImage
    depth_gt: np.ndarray
    pose: PoseSE3  # world <- camera
    index: int


def _wall_exit(origin: np.ndarray, dirs: np.ndarray, half: np.ndarray):
    """Distance to the box wall along each ray (camera inside) and the wall id."""
    t_axis = np.full(dirs.shape[:-1] + (3,), np.inf)
    wall_of_axis = np.zeros(dirs.shape[:-1] + (3,), dtype=np.int64)
    for ax in range(3):
        d = dirs[..., ax]
        pos = d > 0
        neg = d < 0
        bound = np.where(pos, half[ax], -half[ax])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (bound - origin[ax]) / d
        t = np.where(pos | neg, t, np.inf)
        t_axis[..., ax] = t
        wall_of_axis[..., ax] = 2 * ax + pos.astype(np.int64)  # -ax -> 2ax, +ax -> 2ax+1
    ax_min = np.argmin(t_axis, axis=-1)
    t_wall = np.take_along_axis(t_axis, ax_min[..., None], axis=-1)[..., 0]
    wall = np.take_along_axis(wall_of_axis, ax_min[..., None], axis=-1)[..., 0]
    return t_wall, wall


def _block_entry(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray,
                 halfsize: np.ndarray):
    """Slab-method entry distance into an axis-aligned block (inf if missed)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    lo = (center - halfsize - origin) * inv
    hi = (center + halfsize - origin) * inv
    t1 = np.minimum(lo, hi)
    t2 = np.maximum(lo, hi)
    # rays parallel to an axis: only a hit if origin is within that slab
    for ax in range(3):
        par = dirs[..., ax] == 0
        inside = np.abs(origin[ax] - center[ax]) <= halfsize[ax]
        t1[..., ax] = np.where(par, np.where(inside, -np.inf, np.inf), t1[..., ax])
        t2[..., ax] = np.where(par, np.where(inside, np.inf, -np.inf), t2[..., ax])
    t_near = t1.max(axis=-1)
    t_far = t2.min(axis=-1)
    hit = (t_near > 0) & (t_near <= t_far)
    return np.where(hit, t_near, np.inf)


def render_frame(scene: SceneSpec, pose: PoseSE3, H: int, index: int = 0) -> FrameRecord:
    """Render one panorama with analytic depth.  ``pose`` maps camera
    coordinates to world coordinates; the camera center must be inside the
    room (and outside the occluder)."""
    origin = pose.t
    if not scene.inside(origin):
        raise ValidationError("render_frame: camera center outside the room volume")
    rays_cam = PixelGrid(H).rays()
    dirs = rays_cam @ pose.R.T
    half = scene.half
    t_wall, wall = _wall_exit(origin, dirs, half)
    depth = t_wall
    surf = wall
    if scene.occluder_center is not None:
        t_block = _block_entry(origin, dirs, np.asarray(scene.occluder_center),
                               np.asarray(scene.occluder_size) / 2.0)
        hit_block = t_block < t_wall
        depth = np.where(hit_block, t_block, t_wall)
        surf = np.where(hit_block, 6, wall)
    points = origin + dirs * depth[..., None]
    rgb = np.empty((H, 2 * H, 3))
    for w_id in range(7):
        sel = surf == w_id
        if not np.any(sel):
            continue
        if w_id < 6:
            ax = w_id // 2
            a_ax, b_ax = [i for i in range(3) if i != ax]
            a = points[sel][:, a_ax] / scene.extents[a_ax] + 0.5
            b = points[sel][:, b_ax] / scene.extents[b_ax] + 0.5
            strength = scene.texture_strength * scene.wall_strengths[w_id]
        else:
            # occluder: texture by the two largest local coordinates
            rel = points[sel] - np.asarray(scene.occluder_center)
            a = rel[:, 0] + rel[:, 1]
            b = rel[:, 1] + rel[:, 2]
            strength = scene.texture_strength
        rgb[sel] = scene.texture(w_id, a, b, strength)
    rgb_chw = np.ascontiguousarray(rgb.transpose(2, 0, 1))
    return FrameRecord(EquirectImage(rgb_chw), depth, pose, index)


def make_sequence(scene: SceneSpec, trajectory: list[PoseSE3], H: int) -> list[FrameRecord]:
    return [render_frame(scene, pose, H, i) for i, pose in enumerate(trajectory)]


def relative_pose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Motion mapping frame-a camera coordinates into frame-b camera
    coordinates (matches the warp/reproject convention)."""
    return b.inverse().compose(a)


def random_trajectory(scene: SceneSpec, n_frames: int, seed: int,
                      step: float = 0.05, heading_noise: float = 0.3,
                      yaw_noise: float = 0.02) -> list[PoseSE3]:
    """Smooth random walk strictly inside the room with small yaw drift.

    ``heading_noise`` is the per-frame standard deviation of the walk's
    direction change; small values give near-constant-velocity trajectories."""
    from .sphere import rot_y

    rng = np.random.default_rng(seed)
    limit = scene.half * 0.6
    pos = rng.uniform(-0.3, 0.3, size=3) * scene.half
    yaw = 0.0
    heading = rng.uniform(0, 2 * np.pi)
    poses = []
    for _ in range(n_frames):
        poses.append(PoseSE3(rot_y(yaw), pos.copy()))
        heading += rng.normal(0, heading_noise)
        delta = np.array([np.sin(heading),
                          heading_noise * rng.normal(0, 1),
                          np.cos(heading)])
        delta = delta / np.linalg.norm(delta) * step
        nxt = pos + delta
        # bounce off the soft boundary instead of sticking to it
        bounced = (nxt < -limit) | (nxt > limit)
        if bounced.any():
            delta = np.where(bounced, -delta, delta)
            nxt = np.clip(pos + delta, -limit, limit)
            heading = float(np.arctan2(delta[0], delta[2]))
        pos = nxt
        yaw += rng.normal(0, yaw_noise)
        if scene.occluder_center is not None:
            c = np.asarray(scene.occluder_center)
            s = np.asarray(scene.occluder_size) / 2.0 + 0.2
            if np.all(np.abs(pos - c) <= s):
                # minimal push-out along the least-penetrated axis
                ax = int(np.argmax(np.abs(pos - c) / s))
                sign = 1.0 if pos[ax] >= c[ax] else -1.0
                pos[ax] = c[ax] + sign * s[ax]
    return poses
