"""Procedural driving worlds: a route corridor, roadside obstacles, lead vehicles
and crossing pedestrians."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .geometry import Polyline, box_corners, circle_polygon

STATIC, DYNAMIC = 1, 2
OBSTACLE_HEIGHTS = (0.3, 1.5, 3.0)
VEHICLE_LENGTH, VEHICLE_WIDTH, VEHICLE_HEIGHT = 4.0, 2.0, 1.5
PED_RADIUS, PED_HEIGHT = 0.3, 1.7


@dataclass(frozen=True)
class WorldConfig:
    route_length: tuple[float, float] = (200.0, 400.0)
    segments: tuple[int, int] = (6, 12)
    lane_halfwidth: float = 2.0
    obstacles: tuple[int, int] = (4, 10)
    npcs: tuple[int, int] = (0, 2)
    pedestrians: tuple[int, int] = (0, 3)
    marker_spacing: float = 10.0
    spacing: float = 1.0

    def __post_init__(self):
        lo, hi = self.route_length
        if lo <= 0 or hi < lo:
            raise ConfigError(f"route length range {self.route_length} is infeasible")
        if self.segments[0] < 1 or self.segments[1] < self.segments[0]:
            raise ConfigError(f"segment count range {self.segments} is infeasible")
        for name in ("obstacles", "npcs", "pedestrians"):
            a, b = getattr(self, name)
            if a < 0 or b < a:
                raise ConfigError(f"{name} range {(a, b)} is infeasible")

    @classmethod
    def clean(cls, **kw) -> "WorldConfig":
        """No obstacles, vehicles or pedestrians."""
        return cls(obstacles=(0, 0), npcs=(0, 0), pedestrians=(0, 0), **kw)


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned box beside the road."""

    cx: float
    cy: float
    half_x: float
    half_y: float
    height: float

    def polygon(self) -> np.ndarray:
        return box_corners(self.cx, self.cy, 0.0, 2 * self.half_x, 2 * self.half_y)


@dataclass(frozen=True)
class Vehicle:
    """Drives along ``path`` at constant speed from ``start_s``; gone after the path end."""

    path: Polyline
    speed: float
    start_s: float
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    height: float = VEHICLE_HEIGHT

    def s_at(self, t: float) -> float:
        return self.start_s + self.speed * t

    def polygon(self, t: float) -> np.ndarray | None:
        s = self.s_at(t)
        if s > self.path.length:
            return None
        x, y = self.path.point_at(s)
        return box_corners(x, y, float(self.path.heading_at(s)), self.length, self.width)


@dataclass(frozen=True)
class Pedestrian:
    """Stands at ``start`` until ``t0``, walks straight to ``end`` and stays there."""

    start: tuple[float, float]
    end: tuple[float, float]
    speed: float
    t0: float
    radius: float = PED_RADIUS
    height: float = PED_HEIGHT

    def position(self, t: float) -> np.ndarray:
        a, b = np.array(self.start), np.array(self.end)
        dist = float(np.hypot(*(b - a)))
        walked = min(max(t - self.t0, 0.0) * self.speed, dist)
        return a + (b - a) * (walked / dist)

    def polygon(self, t: float) -> np.ndarray:
        x, y = self.position(t)
        return circle_polygon(x, y, self.radius)


@dataclass
class World:
    route: Polyline
    lane_halfwidth: float = 2.0
    obstacles: list[Obstacle] = field(default_factory=list)
    vehicles: list[Vehicle] = field(default_factory=list)
    pedestrians: list[Pedestrian] = field(default_factory=list)
    marker_spacing: float = 10.0

    def route_hash(self) -> str:
        return hashlib.sha256(self.route.points.tobytes()).hexdigest()[:16]

    def markers(self) -> np.ndarray:
        """Arclengths of the sparse route markers, ending with the route end."""
        s = np.arange(self.marker_spacing, self.route.length, self.marker_spacing)
        return np.append(s, self.route.length)

    def scene(self, t: float) -> "Scene":
        """Footprints of every entity present at time ``t``."""
        scene = Scene([], [], [], [])
        for i, ob in enumerate(self.obstacles):
            scene.add(ob.polygon(), STATIC, ob.height, ("Stat", i))
        for i, v in enumerate(self.vehicles):
            p = v.polygon(t)
            if p is not None:
                scene.add(p, DYNAMIC, v.height, ("Veh", i))
        for i, ped in enumerate(self.pedestrians):
            scene.add(ped.polygon(t), DYNAMIC, ped.height, ("Ped", i))
        return scene


@dataclass
class Scene:
    """Snapshot of entity footprints; ``ids`` are stable (kind, index) pairs."""

    polygons: list[np.ndarray]
    classes: list[int]
    heights: list[float]
    ids: list[tuple[str, int]]

    def add(self, polygon: np.ndarray, cls: int, height: float, ident: tuple[str, int]) -> None:
        self.polygons.append(polygon)
        self.classes.append(cls)
        self.heights.append(height)
        self.ids.append(ident)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """All polygon edges [E, 2, 2] and the owning entity of each edge."""
        if not self.polygons:
            return np.zeros((0, 2, 2)), np.zeros(0, dtype=np.int64)
        edges, owner = [], []
        for i, p in enumerate(self.polygons):
            edges.append(np.stack([p, np.roll(p, -1, axis=0)], axis=1))
            owner.append(np.full(len(p), i))
        return np.concatenate(edges), np.concatenate(owner)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _build_route(rng: np.random.Generator, cfg: WorldConfig) -> Polyline:
    total = rng.uniform(*cfg.route_length)
    n = int(rng.integers(cfg.segments[0], cfg.segments[1] + 1))
    lengths = total * rng.dirichlet(np.full(n, 4.0))
    pts = [np.zeros(2)]
    heading = 0.0
    for L in lengths:
        curv = 0.0
        if rng.random() < 0.6:
            # widen the radius so no single arc turns more than 90 degrees
            radius = max(rng.uniform(20.0, 60.0), L / (np.pi / 2))
            curv = rng.choice([-1.0, 1.0]) / radius
        steps = max(1, int(np.ceil(L / cfg.spacing)))
        ds = L / steps
        for _ in range(steps):
            if curv:
                new_heading = heading + curv * ds
                step = np.array([np.sin(new_heading) - np.sin(heading), np.cos(heading) - np.cos(new_heading)]) / curv
                heading = new_heading
            else:
                step = ds * np.array([np.cos(heading), np.sin(heading)])
            pts.append(pts[-1] + step)
    return Polyline(np.array(pts))


def _self_clearance(route: Polyline, window: float) -> float:
    """Smallest distance between route points more than ``window`` apart in arclength."""
    p = route.points
    d = np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1))
    far = np.abs(route.s[:, None] - route.s[None]) > window
    return float(d[far].min()) if far.any() else np.inf


def generate_world(seed: int, cfg: WorldConfig = WorldConfig()) -> World:
    """Deterministic world for ``seed``.

    Routes that come back within 12 m of themselves are redrawn.  Obstacles
    sit beside the corridor and never touch it.
    """
    rng = np.random.default_rng(seed)
    for _ in range(100):
        route = _build_route(rng, cfg)
        if _self_clearance(route, 30.0) > 6 * cfg.lane_halfwidth:
            break
    else:
        raise ConfigError(f"could not draw a non-self-intersecting route for seed {seed}")
    L = route.length
    world = World(route, cfg.lane_halfwidth, marker_spacing=cfg.marker_spacing)

    n_obs = int(rng.integers(cfg.obstacles[0], cfg.obstacles[1] + 1))
    tries = 0
    while len(world.obstacles) < n_obs and tries < 50 * max(n_obs, 1):
        tries += 1
        s = rng.uniform(15.0, L)
        side = rng.choice([-1.0, 1.0])
        offset = side * rng.uniform(cfg.lane_halfwidth + 3.0, cfg.lane_halfwidth + 7.0)
        h = float(route.heading_at(s))
        base = route.point_at(s)
        c = base + offset * np.array([-np.sin(h), np.cos(h)])
        ob = Obstacle(float(c[0]), float(c[1]), float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.5, 1.5)),
                      float(rng.choice(OBSTACLE_HEIGHTS)))
        if route.distance(ob.polygon()).min() > cfg.lane_halfwidth + 1.5:
            world.obstacles.append(ob)

    n_npc = int(rng.integers(cfg.npcs[0], cfg.npcs[1] + 1))
    for i in range(n_npc):
        start = rng.uniform(30.0, max(31.0, L - 100.0))
        world.vehicles.append(Vehicle(route, float(rng.uniform(4.5, 5.5)), float(start)))

    n_ped = int(rng.integers(cfg.pedestrians[0], cfg.pedestrians[1] + 1))
    for _ in range(n_ped):
        s = rng.uniform(40.0, max(41.0, L - 20.0))
        h = float(route.heading_at(s))
        normal = np.array([-np.sin(h), np.cos(h)])
        side = rng.choice([-1.0, 1.0])
        base = route.point_at(s)
        a = base + side * 6.0 * normal
        b = base - side * 6.0 * normal
        world.pedestrians.append(Pedestrian((float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                                            float(rng.uniform(0.8, 1.5)), float(rng.uniform(0.0, 60.0))))
    return world
