"""Toy camera and LiDAR sensors rendered by ray casting against the world."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .geometry import cast_rays, to_world
from .world import World

ROWS, COLS = 64, 128
HFOV_DEG = 60.0
HORIZON = 32.0
CAM_HEIGHT = 1.0
FOCAL = HORIZON / np.tan(np.deg2rad(30.0))
MAX_RANGE = 40.0
LIDAR_RAYS = 360


def column_angles() -> np.ndarray:
    """Viewing angle of each image column, +60 deg (left) to -60 deg (right)."""
    return np.deg2rad(HFOV_DEG - (np.arange(COLS) + 0.5) * (2 * HFOV_DEG / COLS))


@lru_cache(maxsize=1)
def _ground_table():
    """Ego-frame ground point and distance for every pixel below the horizon."""
    rows = np.arange(ROWS)
    below = rows + 0.5 - HORIZON
    depth = np.where(below > 0, FOCAL * CAM_HEIGHT / np.maximum(below, 1e-9), np.inf)
    theta = column_angles()
    gx = np.broadcast_to(depth[:, None], (ROWS, COLS))
    gy = gx * np.tan(theta)[None]
    dist = gx / np.cos(theta)[None]
    keep = np.isfinite(dist) & (dist <= MAX_RANGE)
    r, c = np.nonzero(keep)
    pts = np.stack([gx[r, c], gy[r, c]], axis=1)
    return r, c, pts, dist[r, c]


def render_camera(world: World, ego, t: float = 0.0, s_ego: float | None = None) -> np.ndarray:
    """[3, 64, 128] image: route corridor, static obstacles, dynamic agents.

    Each column is one viewing ray.  The nearest entity hit within 40 m fills
    the rows between its ground contact and its top with 1 / (1 + 0.05 d).
    """
    img = np.zeros((3, ROWS, COLS), dtype=np.float32)

    if s_ego is None:
        s_ego, _ = world.route.project((ego.x, ego.y))
    r, c, pts, dist = _ground_table()
    wpts = to_world(pts, ego.x, ego.y, ego.yaw)
    on_route = world.route.distance(wpts, s_ego - 2.0, s_ego + MAX_RANGE + 10.0) <= world.lane_halfwidth
    img[0, r[on_route], c[on_route]] = 1.0 / (1.0 + 0.05 * dist[on_route])

    scene = world.scene(t)
    edges, owner = scene.edges()
    theta = column_angles()
    d, hit = cast_rays((ego.x, ego.y), ego.yaw + theta, edges, MAX_RANGE)
    for col in np.nonzero(hit >= 0)[0]:
        ent = owner[hit[col]]
        depth = d[col] * np.cos(theta[col])
        h = scene.heights[ent]
        top = HORIZON - FOCAL * (h - CAM_HEIGHT) / depth
        bottom = HORIZON + FOCAL * CAM_HEIGHT / depth
        r0 = int(np.clip(np.floor(top), 0, ROWS - 1))
        r1 = int(np.clip(np.floor(bottom), 0, ROWS - 1))
        img[scene.classes[ent], r0:r1 + 1, col] = 1.0 / (1.0 + 0.05 * d[col])
    return img


def render_lidar(world: World, ego, t: float = 0.0) -> np.ndarray:
    """[P, 3] ego-frame points from 360 rays at 1 degree spacing.

    Every hit within 40 m yields points at z = 0.2, h/2 and h - 0.1, with the
    entity height h clamped to at least 0.2.
    """
    scene = world.scene(t)
    edges, owner = scene.edges()
    alpha = np.deg2rad(np.arange(LIDAR_RAYS, dtype=np.float64))
    d, hit = cast_rays((ego.x, ego.y), ego.yaw + alpha, edges, MAX_RANGE)
    idx = np.nonzero(hit >= 0)[0]
    if len(idx) == 0:
        return np.zeros((0, 3), dtype=np.float64)
    h = np.maximum(np.asarray(scene.heights)[owner[hit[idx]]], 0.2)
    x = d[idx] * np.cos(alpha[idx])
    y = d[idx] * np.sin(alpha[idx])
    zs = np.stack([np.full_like(h, 0.2), h / 2, h - 0.1], axis=1)
    pts = np.stack([np.repeat(x, 3), np.repeat(y, 3), zs.reshape(-1)], axis=1)
    return pts
