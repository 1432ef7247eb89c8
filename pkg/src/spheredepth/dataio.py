"""Dataset ingestion and on-disk formats: PFM depth maps, 8-bit PNG
panoramas, pose lines (row-major 3x4, world <- camera), and the
line-oriented sequence manifest.

Manifest lines are whitespace-separated:

    <rgb path> [<depth pfm path> | -] [<12 pose floats>]

Paths are relative to the dataset root.  A missing depth column is written
as ``-``; a missing pose means identity.
"""

from __future__ import annotations

import os
from typing import Iterator, Optional

import numpy as np
from PIL import Image

from .errors import IngestionError
from .resample import EquirectImage
from .sphere import PoseSE3
from .synth import FrameRecord


def write_pfm(path, data: np.ndarray) -> None:
    """Little-endian grayscale PFM; rows stored bottom-to-top."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise IngestionError(f"PFM writer expects a 2-D map, got rank {data.ndim}")
    H, W = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{W} {H}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            header = f.readline().strip()
            if header != b"Pf":
                raise IngestionError(f"{path}: malformed PFM header {header!r} "
                                     "(only grayscale 'Pf' supported)")
            dims = f.readline().split()
            if len(dims) != 2:
                raise IngestionError(f"{path}: malformed PFM dimension line")
            W, H = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
            endian = "<" if scale < 0 else ">"
            data = np.frombuffer(f.read(W * H * 4), dtype=f"{endian}f4")
    except (OSError, ValueError) as e:
        raise IngestionError(f"cannot read PFM {path}: {e}") from e
    if data.size != W * H:
        raise IngestionError(f"{path}: truncated PFM payload")
    return data.reshape(H, W)[::-1].astype(np.float32)


def save_png(path, rgb_chw: np.ndarray) -> None:
    """RGB [3,H,W] in [0,1] -> 8-bit PNG."""
    arr = np.clip(np.round(np.asarray(rgb_chw) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)


def load_png(path) -> np.ndarray:
    try:
        img = Image.open(path).convert("RGB")
    except OSError as e:
        raise IngestionError(f"cannot read image {path}: {e}") from e
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def format_pose(pose: PoseSE3) -> str:
    mat = np.concatenate([pose.R, pose.t[:, None]], axis=1)
    return " ".join(repr(float(x)) for x in mat.ravel())


def parse_pose(tokens) -> PoseSE3:
    if len(tokens) != 12:
        raise IngestionError(f"pose needs 12 floats, got {len(tokens)}")
    mat = np.array([float(t) for t in tokens]).reshape(3, 4)
    return PoseSE3(mat[:, :3], mat[:, 3])


def load_dataset(root, manifest: str = "manifest.txt") -> Iterator[FrameRecord]:
    """Yield FrameRecords for each manifest line; empty manifests yield
    nothing.  RGB is validated to be 2:1 equirectangular."""
    manifest_path = os.path.join(root, manifest)
    try:
        with open(manifest_path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as e:
        raise IngestionError(f"cannot read manifest {manifest_path}: {e}") from e
    for index, line in enumerate(lines):
        fields = line.split()
        rgb_path = os.path.join(root, fields[0])
        rgb = load_png(rgb_path)
        _, H, W = rgb.shape
        if W != 2 * H:
            raise IngestionError(
                f"{rgb_path}: aspect {W}x{H} is not 2:1 equirectangular")
        depth: Optional[np.ndarray] = None
        rest = fields[1:]
        if rest and rest[0] != "-" and not _is_float(rest[0]):
            depth = read_pfm(os.path.join(root, rest[0]))
            if depth.shape != (H, W):
                raise IngestionError(
                    f"{rest[0]}: depth shape {depth.shape} != image plane ({H}, {W})")
            rest = rest[1:]
        elif rest and rest[0] == "-":
            rest = rest[1:]
        pose = parse_pose(rest) if rest else PoseSE3.identity()
        yield FrameRecord(EquirectImage(rgb), depth, pose, index)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def save_dataset(root, frames, with_depth: bool = True) -> None:
    """Write frames as PNG + PFM + manifest under root (used by gen-synth)."""
    os.makedirs(root, exist_ok=True)
    lines = []
    for fr in frames:
        rgb_name = f"frame_{fr.index:05d}.png"
        save_png(os.path.join(root, rgb_name), fr.rgb.data)
        if with_depth and fr.depth_gt is not None:
            depth_name = f"frame_{fr.index:05d}.pfm"
            write_pfm(os.path.join(root, depth_name), fr.depth_gt)
        else:
            depth_name = "-"
        lines.append(f"{rgb_name} {depth_name} {format_pose(fr.pose)}")
    with open(os.path.join(root, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
