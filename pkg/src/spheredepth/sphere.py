"""Spherical projection algebra: cubemap/equirectangular coordinate maps,
forward and inverse projection between unit directions and (longitude,
latitude), depth-based reprojection between posed panoramas, and rotation of
panorama coordinate grids.

Conventions fixed here (and relied on by every other module):

* A direction is the unit vector ``q = (sin(theta)cos(phi), sin(phi),
  cos(theta)cos(phi))`` with longitude ``theta`` in [-pi, pi) and latitude
  ``phi`` in [-pi/2, pi/2]; +y is up, +z is the forward axis.
* Equirectangular pixel centers: ``theta = (u+0.5)/W * 2pi - pi`` and
  ``phi = pi/2 - (v+0.5)/H * pi`` with W = 2H, so row 0 is the north edge.
* Cube faces are named B, D, F, L, R, U (back, down, front, left, right, up)
  with view axes -z, -y, +z, -x, +x, +y.  Face F uses the identity rotation;
  the other face rotations are axis permutations with integer entries.
* Cube face pixel centers: homogeneous pixel ``(u+0.5, v+0.5, 1)`` with the
  intrinsics K = [[w/2, 0, w/2], [0, w/2, w/2], [0, 0, 1]].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

FACE_ORDER = ("B", "D", "F", "L", "R", "U")

# camera-to-world rotations; columns are the face camera axes, column 2 is the
# view direction
FACE_ROTATIONS = {
    "B": np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]),
    "D": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    "F": np.eye(3),
    "L": np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
    "R": np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
    "U": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
}

FACE_AXES = {name: R[:, 2].copy() for name, R in FACE_ROTATIONS.items()}


def face_intrinsics(w: int) -> np.ndarray:
    return np.array([[w / 2, 0.0, w / 2], [0.0, w / 2, w / 2], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CubeFace:
    id: str
    w: int

    @property
    def rotation(self) -> np.ndarray:
        return FACE_ROTATIONS[self.id]

    @property
    def K(self) -> np.ndarray:
        return face_intrinsics(self.w)


@dataclass
class PoseSE3:
    """Rigid motion: x_out = R @ x_in + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.R.shape != (3, 3):
            raise ValidationError(f"pose rotation has shape {self.R.shape}, expected (3, 3)")
        if not np.allclose(self.R.T @ self.R, np.eye(3), atol=1e-9):
            raise ValidationError("pose rotation is not orthonormal")
        if np.linalg.det(self.R) < 0:
            raise ValidationError("pose rotation has negative determinant")

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return PoseSE3(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "PoseSE3":
        return PoseSE3(self.R.T, -self.R.T @ self.t)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.R.T + self.t


def unproject(theta, phi) -> np.ndarray:
    """(theta, phi) -> unit direction(s), shape (..., 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    return np.stack([np.sin(theta) * cp, np.sin(phi), np.cos(theta) * cp], axis=-1)


def project(q) -> tuple[np.ndarray, np.ndarray]:
    """Direction(s) (..., 3) -> (theta, phi).  Poles canonicalize theta to 0."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm == 0):
        raise DomainError("project: zero direction vector")
    theta = np.arctan2(q[..., 0], q[..., 2])
    phi = np.arcsin(np.clip(q[..., 1] / norm, -1.0, 1.0))
    pole = (q[..., 0] == 0) & (q[..., 2] == 0)
    theta = np.where(pole, 0.0, theta)
    return theta, phi


def cube_to_equirect_coord(face: str, u, v, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Face pixel coordinates -> (theta, phi) via q = R_i K^-1 p_hat."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    half = w / 2.0
    # K^-1 applied to (u+0.5, v+0.5, 1)
    x = (u + 0.5 - half) / half
    y = (v + 0.5 - half) / half
    ones = np.ones_like(x)
    p = np.stack([x, y, ones], axis=-1)
    q = p @ FACE_ROTATIONS[face].T
    return project(q)


def equirect_to_cube_coord(theta, phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(theta, phi) -> (face index into FACE_ORDER, u, v) for unit side w = 1.

    Pixel coordinates are returned normalized to the [0, 1) face square;
    multiply by w and shift by the half-pixel for a concrete side length
    (see :func:`equirect_to_cube_pixel`).  Seam ties break to the first face
    in the fixed order B < D < F < L < R < U."""
    q = unproject(theta, phi)
    dots = np.stack([q @ FACE_AXES[f] for f in FACE_ORDER], axis=-1)
    face = np.argmax(dots, axis=-1)
    u = np.empty_like(np.asarray(theta, dtype=np.float64))
    v = np.empty_like(u)
    for i, name in enumerate(FACE_ORDER):
        sel = face == i
        if not np.any(sel):
            continue
        qc = q[sel] @ FACE_ROTATIONS[name]  # R^T q
        u[sel] = 0.5 * qc[..., 0] / qc[..., 2] + 0.5
        v[sel] = 0.5 * qc[..., 1] / qc[..., 2] + 0.5
    return face, u, v


def equirect_to_cube_pixel(theta, phi, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """As :func:`equirect_to_cube_coord` but in pixel units for side w."""
    face, u, v = equirect_to_cube_coord(theta, phi)
    return face, u * w - 0.5, v * w - 0.5


def reproject(theta, phi, depth, pose: PoseSE3):
    """Map directions with metric depth through a rigid motion.

    Returns (theta_hat, phi_hat, new_depth) of q_hat = R * depth * ray + t."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValidationError("reproject: depth must be strictly positive")
    q = pose.apply(unproject(theta, phi) * depth[..., None])
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm == 0):
        raise DomainError("reproject: point coincides with target camera center")
    th, ph = project(q)
    return th, ph, norm


@dataclass(frozen=True)
class PixelGrid:
    """Equirectangular pixel-center convention for an H x 2H panorama."""

    H: int
    W: int = field(default=0)

    def __post_init__(self):
        if self.W == 0:
            object.__setattr__(self, "W", 2 * self.H)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel (theta, phi), each shaped [H, W]."""
        u = np.arange(self.W, dtype=np.float64)
        v = np.arange(self.H, dtype=np.float64)
        theta = (u + 0.5) / self.W * 2 * np.pi - np.pi
        phi = np.pi / 2 - (v + 0.5) / self.H * np.pi
        return np.broadcast_to(theta, (self.H, self.W)).copy(), \
            np.broadcast_to(phi[:, None], (self.H, self.W)).copy()

    def to_pixels(self, theta, phi) -> tuple[np.ndarray, np.ndarray]:
        """(theta, phi) -> continuous (u, v) pixel coordinates."""
        u = (np.asarray(theta) + np.pi) / (2 * np.pi) * self.W - 0.5
        v = (np.pi / 2 - np.asarray(phi)) / np.pi * self.H - 0.5
        return u, v

    def rays(self) -> np.ndarray:
        """Unit directions per pixel, shape [H, W, 3]."""
        theta, phi = self.angles()
        return unproject(theta, phi)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def rotate_sphere(R: np.ndarray, grid: PixelGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel source (theta, phi) for resampling a panorama rotated by R.

    The output pixel looking along d samples the source along R^-1 d, so a
    pure yaw of 2*pi*k/W is an exact column shift by k."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9) \
            or np.linalg.det(R) < 0:
        raise ValidationError("rotate_sphere: R is not a rotation matrix")
    src = grid.rays() @ R  # rows: R^T d
    return project(src)
