"""LiDAR BEV histogram and the tiny CNN backbones for both sensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .params import Initializer, Params
from .tensor import Tensor, as_tensor

CAMERA_SHAPE = (3, 64, 128)
BEV_SHAPE = (3, 64, 64)
STAGE_CHANNELS = (16, 32, 64, 128)


@dataclass(frozen=True)
class BevConfig:
    """Metric extent of the BEV grid in the ego frame (x forward, y left)."""

    x_min: float = 0.0
    x_max: float = 32.0
    y_min: float = -16.0
    y_max: float = 16.0
    rows: int = 64
    cols: int = 64
    z_edges: tuple[float, float] = (0.5, 2.0)
    clip: int = 5

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigError("BEV cell counts must be positive")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ConfigError("BEV extent must be nonempty")


def bev_histogram(points: np.ndarray, cfg: BevConfig = BevConfig()) -> np.ndarray:
    """Rasterise an [P, 3] ego-frame point cloud into a [3, rows, cols] grid.

    Row index grows with x (forward), column index grows with y (left).  The
    three channels count points below 0.5 m, in [0.5, 2.0) m and at or above
    2.0 m.  Counts are clipped at 5 and divided by 5.
    """
    grid = np.zeros((3, cfg.rows, cfg.cols), dtype=np.float32)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return grid
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    keep = (x >= cfg.x_min) & (x < cfg.x_max) & (y >= cfg.y_min) & (y < cfg.y_max)
    x, y, z = x[keep], y[keep], z[keep]
    row = np.floor((x - cfg.x_min) / (cfg.x_max - cfg.x_min) * cfg.rows).astype(np.int64)
    col = np.floor((y - cfg.y_min) / (cfg.y_max - cfg.y_min) * cfg.cols).astype(np.int64)
    row = np.minimum(row, cfg.rows - 1)
    col = np.minimum(col, cfg.cols - 1)
    zbin = np.digitize(z, cfg.z_edges, right=False)
    flat = np.bincount((zbin * cfg.rows + row) * cfg.cols + col, minlength=grid.size)
    counts = flat.reshape(grid.shape)
    return (np.minimum(counts, cfg.clip) / cfg.clip).astype(np.float32)


# ---------------------------------------------------------------------------
# backbones
# ---------------------------------------------------------------------------

def init_backbone(init: Initializer, prefix: str, in_channels: int = 3, channels=STAGE_CHANNELS) -> None:
    c_in = in_channels
    for i, c_out in enumerate(channels):
        init.conv(f"{prefix}.stage{i}", c_in, c_out, 3)
        c_in = c_out


def backbone_stage(x: Tensor, params: Params, i: int) -> Tensor:
    """Stage ``i``: 3x3 conv, stride 2, pad 1, then relu."""
    return ops.relu(ops.conv2d(x, params[f"stage{i}.w"], params[f"stage{i}.b"], stride=2, pad=1))


def run_backbone(x, params: Params, expected_shape: tuple[int, ...]) -> list[Tensor]:
    x = as_tensor(x)
    if x.shape[-3:] != expected_shape or x.ndim not in (3, 4):
        raise DimensionError(f"backbone input {x.shape} does not match {expected_shape}")
    stages = []
    n = len([k for k in params if k.endswith(".w")])
    for i in range(n):
        x = backbone_stage(x, params, i)
        stages.append(x)
    return stages


def camera_backbone(frame, params: Params) -> list[Tensor]:
    """Feature pyramid of a [3, 64, 128] (or batched) camera frame."""
    return run_backbone(frame, params, CAMERA_SHAPE)


def lidar_backbone(bev, params: Params) -> list[Tensor]:
    """Feature pyramid of a [3, 64, 64] (or batched) BEV grid."""
    return run_backbone(bev, params, BEV_SHAPE)
