"""2-D geometry helpers: polylines, oriented boxes, ray casting, overlap tests."""

from __future__ import annotations

import numpy as np


class Polyline:
    """Piecewise-linear curve with cumulative arclength."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"polyline needs at least two 2-D points, got shape {pts.shape}")
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seglen <= 0):
            raise ValueError("polyline has repeated points")
        self.points = pts
        self.seg = seg
        self.seglen = seglen
        self.s = np.concatenate([[0.0], np.cumsum(seglen)])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s) -> np.ndarray:
        """Positions at arclengths ``s``; beyond either end the end segment is extended."""
        s = np.asarray(s, dtype=np.float64)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.seg) - 1)
        frac = (s - self.s[i]) / self.seglen[i]
        return self.points[i] + frac[..., None] * self.seg[i]

    def heading_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.seg) - 1)
        return np.arctan2(self.seg[i, 1], self.seg[i, 0])

    def project(self, p, s_lo: float = -np.inf, s_hi: float = np.inf) -> tuple[float, float]:
        """Arclength and signed lateral offset (left positive) of the closest point.

        Only segments overlapping [s_lo, s_hi] are considered.
        """
        p = np.asarray(p, dtype=np.float64)
        mask = (self.s[1:] >= s_lo) & (self.s[:-1] <= s_hi)
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            idx = np.arange(len(self.seg))
        a = self.points[idx]
        d = self.seg[idx]
        t = np.clip(((p - a) * d).sum(axis=1) / self.seglen[idx] ** 2, 0.0, 1.0)
        closest = a + t[:, None] * d
        dist2 = ((p - closest) ** 2).sum(axis=1)
        j = int(np.argmin(dist2))
        k = idx[j]
        s = self.s[k] + t[j] * self.seglen[k]
        rel = p - closest[j]
        side = np.sign(d[j, 0] * rel[1] - d[j, 1] * rel[0])
        return float(s), float(side * np.sqrt(dist2[j]))

    def distance(self, pts, s_lo: float = -np.inf, s_hi: float = np.inf) -> np.ndarray:
        """Unsigned distance from each of [P, 2] points to the polyline."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        mask = (self.s[1:] >= s_lo) & (self.s[:-1] <= s_hi)
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            return np.full(len(pts), np.inf)
        a = self.points[idx][None]
        d = self.seg[idx][None]
        rel = pts[:, None, :] - a
        t = np.clip((rel * d).sum(-1) / self.seglen[idx][None] ** 2, 0.0, 1.0)
        diff = rel - t[..., None] * d
        return np.sqrt((diff ** 2).sum(-1).min(axis=1))


def box_corners(cx: float, cy: float, yaw: float, length: float, width: float) -> np.ndarray:
    """Corners (counter-clockwise) of an oriented box, shape [4, 2]."""
    c, s = np.cos(yaw), np.sin(yaw)
    hl, hw = length / 2, width / 2
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def circle_polygon(cx: float, cy: float, r: float, n: int = 8) -> np.ndarray:
    ang = np.arange(n) * (2 * np.pi / n)
    return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)


def polygon_edges(poly: np.ndarray) -> np.ndarray:
    """[n, 2, 2] closed edge list of a polygon."""
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def cast_rays(origin, angles, edges: np.ndarray, max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit of each ray against a set of segments.

    Returns (distance, edge index); misses get distance inf and index -1.
    ``edges`` is [E, 2, 2] in the same frame as ``origin``.
    """
    angles = np.asarray(angles, dtype=np.float64)
    dist = np.full(angles.shape, np.inf)
    hit = np.full(angles.shape, -1, dtype=np.int64)
    if len(edges) == 0:
        return dist, hit
    o = np.asarray(origin, dtype=np.float64)
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    a = edges[:, 0][None]
    e = (edges[:, 1] - edges[:, 0])[None]
    ox, oy = a[..., 0] - o[0], a[..., 1] - o[1]
    denom = dx * e[..., 1] - dy * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ox * e[..., 1] - oy * e[..., 0]) / denom
        u = (ox * dy - oy * dx) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0) & (t <= max_range) & (u >= 0) & (u <= 1)
    t = np.where(valid, t, np.inf)
    hit = np.argmin(t, axis=1)
    dist = t[np.arange(len(angles)), hit]
    hit = np.where(np.isfinite(dist), hit, -1)
    return dist, hit


def polygons_overlap(p: np.ndarray, q: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons."""
    for poly in (p, q):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        pp = p @ normals.T
        qq = q @ normals.T
        if np.any((pp.max(axis=0) < qq.min(axis=0)) | (qq.max(axis=0) < pp.min(axis=0))):
            return False
    return True


def to_ego(points, x: float, y: float, yaw: float) -> np.ndarray:
    """World [.., 2] points into the frame at (x, y) facing ``yaw``."""
    pts = np.asarray(points, dtype=np.float64)
    c, s = np.cos(yaw), np.sin(yaw)
    rel = pts - np.array([x, y])
    return np.stack([c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]], axis=-1)


def to_world(points, x: float, y: float, yaw: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    c, s = np.cos(yaw), np.sin(yaw)
    return np.stack([x + c * pts[..., 0] - s * pts[..., 1], y + s * pts[..., 0] + c * pts[..., 1]], axis=-1)
