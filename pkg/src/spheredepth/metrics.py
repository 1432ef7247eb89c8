"""Depth evaluation protocol: error metrics, delta-threshold accuracies,
median alignment, the 10 m ground-truth cutoff, and binary PLY export."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import EmptyBatchError, ValidationError
from .sphere import PixelGrid

DEPTH_CUTOFF_M = 10.0
DELTA_BASE = 1.25


@dataclass
class DepthMetrics:
    mae: float
    mre: float
    rmse: float
    rmse_log10: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def eval_mask(depth_gt: np.ndarray, cutoff: float = DEPTH_CUTOFF_M) -> np.ndarray:
    """Pixels with finite, positive ground truth at or below the cutoff."""
    gt = np.asarray(depth_gt)
    return np.isfinite(gt) & (gt > 0) & (gt <= cutoff)


def _median_lower(x: np.ndarray) -> float:
    """Lower-middle element for even counts (documented tie rule)."""
    s = np.sort(np.asarray(x).ravel())
    return float(s[(s.size - 1) // 2])


def median_align(d: np.ndarray, d_gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Rescale predictions so the masked medians agree."""
    d = np.asarray(d, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyBatchError("median_align: empty mask")
    med_pred = _median_lower(d[mask])
    if med_pred == 0:
        raise ValidationError("median_align: zero median of predictions")
    return d * (_median_lower(np.asarray(d_gt, dtype=np.float64)[mask]) / med_pred)


def compute_metrics(d: np.ndarray, d_gt: np.ndarray, mask: np.ndarray) -> DepthMetrics:
    d = np.asarray(d, dtype=np.float64)
    d_gt = np.asarray(d_gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyBatchError("compute_metrics: empty mask")
    p = d[mask]
    g = d_gt[mask]
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValidationError("compute_metrics: non-positive masked depth")
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        mae=float(np.abs(err).mean()),
        mre=float((np.abs(err) / g).mean()),
        rmse=float(np.sqrt((err ** 2).mean())),
        rmse_log10=float(np.sqrt(((np.log10(p) - np.log10(g)) ** 2).mean())),
        delta1=float((ratio < DELTA_BASE).mean()),
        delta2=float((ratio < DELTA_BASE ** 2).mean()),
        delta3=float((ratio < DELTA_BASE ** 3).mean()),
    )


def mean_metrics(per_frame: list[DepthMetrics]) -> DepthMetrics:
    """Unweighted per-frame mean."""
    if not per_frame:
        raise EmptyBatchError("mean_metrics: no frames")
    return DepthMetrics(*[float(np.mean([getattr(m, f.name) for m in per_frame]))
                          for f in fields(DepthMetrics)])


def export_pointcloud(depth: np.ndarray, rgb, path, valid_mask=None) -> int:
    """Write a binary little-endian PLY of depth * ray direction per valid
    pixel, colored from the panorama.  Returns the vertex count."""
    depth = np.asarray(depth, dtype=np.float64)
    H, W = depth.shape
    if valid_mask is None:
        valid_mask = np.isfinite(depth) & (depth > 0)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    rays = PixelGrid(H, W).rays()
    pts = (rays * depth[..., None])[valid_mask].astype("<f4")
    if rgb is None:
        colors = np.full((pts.shape[0], 3), 255, dtype=np.uint8)
    else:
        rgb = np.asarray(rgb)
        colors = np.clip(np.round(rgb.transpose(1, 2, 0)[valid_mask] * 255), 0, 255) \
            .astype(np.uint8)
    n = pts.shape[0]
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            for i in range(0, n, 65536):
                chunk_p = pts[i:i + 65536]
                chunk_c = colors[i:i + 65536]
                rec = np.zeros(chunk_p.shape[0],
                               dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                      ("r", "u1"), ("g", "u1"), ("b", "u1")])
                rec["x"], rec["y"], rec["z"] = chunk_p.T
                rec["r"], rec["g"], rec["b"] = chunk_c.T
                f.write(rec.tobytes())
    except OSError as e:
        raise IOError(f"cannot write PLY {path}: {e}") from e
    return n


def read_pointcloud(path):
    """Read back a PLY written by :func:`export_pointcloud` (tests only)."""
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.index(b"end_header\n") + len(b"end_header\n")
    header = blob[:end].decode("ascii")
    n = int([line for line in header.splitlines()
             if line.startswith("element vertex")][0].split()[-1])
    rec = np.frombuffer(blob[end:], dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                           ("r", "u1"), ("g", "u1"), ("b", "u1")],
                        count=n)
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=-1).astype(np.float64)
    colors = np.stack([rec["r"], rec["g"], rec["b"]], axis=-1)
    return pts, colors
