"""Infraction detection and RC / IS / DS driving metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .driving import EGO_LENGTH, EGO_WIDTH, EgoState, locate
from .geometry import box_corners, polygons_overlap
from .world import World

KINDS = ("Ped", "Veh", "Stat", "Dev", "TO", "Block")
PENALTY = {"Ped": 0.50, "Veh": 0.60, "Stat": 0.65}


@dataclass(frozen=True)
class InfractionEvent:
    kind: str
    time: float
    position: tuple[float, float]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown infraction kind {self.kind!r}")


@dataclass(frozen=True)
class Limits:
    dt: float = 0.1
    time_limit: float = 120.0
    infer_every: int = 5
    block_time: float = 30.0
    block_speed: float = 0.1
    max_deviation: float = 6.0
    rearm: float = 2.0
    finish_margin: float = 1.0


@dataclass
class DriveMetrics:
    rc: float
    is_: float
    ds: float
    per_km: dict[str, float]
    km_driven: float
    counts: dict[str, int] = field(default_factory=dict)
    no_distance: bool = False


def compute_metrics(events, route_progress: float, route_length: float, km_driven: float) -> DriveMetrics:
    """RC from progress, IS as a product of collision penalties, DS = RC * IS."""
    if route_length <= 0:
        raise ValueError(f"route length must be positive, got {route_length}")
    rc = 100.0 * min(max(route_progress / route_length, 0.0), 1.0)
    counts = {k: 0 for k in KINDS}
    for ev in events:
        counts[ev.kind] += 1
    is_ = 1.0
    for kind, factor in PENALTY.items():
        is_ *= factor ** counts[kind]
    no_distance = km_driven <= 0
    per_km = {k: 0.0 if no_distance else counts[k] / km_driven for k in KINDS}
    return DriveMetrics(rc, is_, rc * is_, per_km, km_driven, counts, no_distance)


def aggregate(metrics: list[DriveMetrics]) -> dict[str, float]:
    """Means over episodes; DS is the mean of per-episode products."""
    if not metrics:
        raise ValueError("no episodes to aggregate")
    return {
        "ds": float(np.mean([m.ds for m in metrics])),
        "rc": float(np.mean([m.rc for m in metrics])),
        "is": float(np.mean([m.is_ for m in metrics])),
    }


def format_line(seed: int, m: DriveMetrics) -> str:
    c, r = m.counts, m.per_km
    return (f"episode={seed} rc={m.rc:.4f} is={m.is_:.6f} ds={m.ds:.4f} "
            f"ped={r['Ped']:.4f} veh={r['Veh']:.4f} stat={r['Stat']:.4f} "
            f"dev={c['Dev']} to={c['TO']} block={c['Block']} km={m.km_driven:.4f}")


class InfractionMonitor:
    """Stateful per-step infraction detector; also tracks monotone route progress.

    Collisions fire on first contact and re-arm once the ego has been clear of
    that entity for ``limits.rearm`` seconds.  Dev, Block and TO end the run.
    """

    def __init__(self, world: World, limits: Limits = Limits()):
        self.world = world
        self.limits = limits
        self.events: list[InfractionEvent] = []
        self.s = 0.0
        self.progress = 0.0
        self.km = 0.0
        self.done = False
        self.completed = False
        self._last_contact: dict[tuple[str, int], float] = {}
        self._armed: dict[tuple[str, int], bool] = {}
        self._still_since: float | None = None
        self._prev: EgoState | None = None

    def _emit(self, kind: str, t: float, ego: EgoState) -> None:
        self.events.append(InfractionEvent(kind, round(t, 6), (ego.x, ego.y)))

    def update(self, t: float, ego: EgoState) -> list[InfractionEvent]:
        n0 = len(self.events)
        lim = self.limits
        if self._prev is not None:
            self.km += float(np.hypot(ego.x - self._prev.x, ego.y - self._prev.y)) / 1000.0
        self._prev = ego

        s, lateral = locate(self.world, ego, self.s)
        self.s = s
        L = self.world.route.length
        if s >= L - lim.finish_margin:
            self.progress = L
        else:
            self.progress = max(self.progress, s)

        foot = box_corners(ego.x, ego.y, ego.yaw, EGO_LENGTH, EGO_WIDTH)
        scene = self.world.scene(t)
        for poly, ident in zip(scene.polygons, scene.ids):
            if np.hypot(*(poly.mean(axis=0) - (ego.x, ego.y))) > 10.0:
                hit = False
            else:
                hit = polygons_overlap(foot, poly)
            if hit:
                if self._armed.get(ident, True):
                    self._emit(ident[0], t, ego)
                    self._armed[ident] = False
                self._last_contact[ident] = t
            elif not self._armed.get(ident, True) and t - self._last_contact[ident] >= lim.rearm - 1e-9:
                self._armed[ident] = True

        if self.progress >= L:
            self.completed = True
            self.done = True
        elif abs(lateral) > lim.max_deviation:
            self._emit("Dev", t, ego)
            self.done = True
        else:
            if ego.speed < lim.block_speed:
                if self._still_since is None:
                    self._still_since = t
                if t - self._still_since >= lim.block_time - 1e-9:
                    self._emit("Block", t, ego)
                    self.done = True
            else:
                self._still_since = None
            if not self.done and t >= lim.time_limit - 1e-9:
                self._emit("TO", t, ego)
                self.done = True
        return self.events[n0:]

    def metrics(self) -> DriveMetrics:
        return compute_metrics(self.events, self.progress, self.world.route.length, self.km)


def detect_infractions(world: World, trajectory, limits: Limits = Limits()) -> list[InfractionEvent]:
    """Replay a trajectory of rows (t, x, y, yaw, speed) through the monitor."""
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2 or len(traj) == 0:
        raise ValueError("trajectory must be a nonempty [n, 5] array")
    mon = InfractionMonitor(world, limits)
    for t, x, y, yaw, v in traj:
        mon.update(float(t), EgoState(float(x), float(y), float(yaw), float(v)))
        if mon.done:
            break
    return mon.events
