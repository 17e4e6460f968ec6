"""Ego vehicle dynamics, the privileged expert driver and the waypoint follower."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import to_ego
from .world import World

WHEELBASE = 2.5
MAX_STEER = 0.5
MAX_ACCEL = 3.0
MAX_SPEED = 10.0
EGO_LENGTH, EGO_WIDTH = 4.0, 2.0
EXPERT_SPEED = 6.0
STOP_DISTANCE = 8.0
WAYPOINT_OFFSETS = (2.0, 4.0, 6.0, 8.0)
LOOKAHEAD = 4.0
GOAL_MIN_LEAD = 5.0


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    yaw: float
    speed: float = 0.0


@dataclass(frozen=True)
class Control:
    steer: float
    target_speed: float


class RouteComplete(Exception):
    """The ego has reached the end of its route."""


def step_dynamics(ego: EgoState, control: Control, dt: float = 0.1) -> EgoState:
    """Kinematic bicycle step.

    Speed moves toward the target by at most 3 m/s^2 * dt.  Position follows
    the exact circular arc of the clamped steering angle over the distance
    covered at the mean of old and new speed.
    """
    steer = min(max(control.steer, -MAX_STEER), MAX_STEER)
    target = min(max(control.target_speed, 0.0), MAX_SPEED)
    dv = min(max(target - ego.speed, -MAX_ACCEL * dt), MAX_ACCEL * dt)
    v = min(max(ego.speed + dv, 0.0), MAX_SPEED)
    ds = 0.5 * (ego.speed + v) * dt
    kappa = math.tan(steer) / WHEELBASE
    if abs(kappa) < 1e-12:
        x = ego.x + ds * math.cos(ego.yaw)
        y = ego.y + ds * math.sin(ego.yaw)
        yaw = ego.yaw
    else:
        yaw = ego.yaw + kappa * ds
        x = ego.x + (math.sin(yaw) - math.sin(ego.yaw)) / kappa
        y = ego.y + (math.cos(ego.yaw) - math.cos(yaw)) / kappa
    return EgoState(x, y, yaw, v)


def pure_pursuit(aim_x: float, aim_y: float) -> float:
    """Steering angle that puts an ego-frame aim point on the rear-axle arc."""
    ld2 = aim_x * aim_x + aim_y * aim_y
    if ld2 < 1e-12:
        return 0.0
    steer = math.atan(2.0 * WHEELBASE * aim_y / ld2)
    return min(max(steer, -MAX_STEER), MAX_STEER)


def waypoint_controller(wps, speed: float = 0.0) -> Control:
    """Follow predicted waypoints: aim at the second one, speed from their spacing.

    The waypoints are 0.5 s apart, so the target speed is twice the distance
    between the first two, clamped to [0, 8] m/s.  A first waypoint within
    0.25 m of the ego means stop.
    """
    w = np.asarray(wps, dtype=np.float64)
    if len(w) < 2:
        raise ValueError("waypoint controller needs at least two waypoints")
    target = min(max(2.0 * float(np.hypot(*(w[1] - w[0]))) / 1.0, 0.0), 8.0)
    if float(np.hypot(*w[0])) < 0.25:
        target = 0.0
    return Control(pure_pursuit(float(w[1, 0]), float(w[1, 1])), target)


def locate(world: World, ego: EgoState, s_hint: float | None = None) -> tuple[float, float]:
    """Route arclength and lateral offset of the ego, searched near ``s_hint``."""
    if s_hint is None:
        return world.route.project((ego.x, ego.y))
    return world.route.project((ego.x, ego.y), s_hint - 10.0, s_hint + 20.0)


def route_waypoints(world: World, ego: EgoState, s: float) -> np.ndarray:
    """Route points 2, 4, 6 and 8 m ahead of arclength ``s``, in the ego frame."""
    pts = world.route.point_at(s + np.array(WAYPOINT_OFFSETS))
    return to_ego(pts, ego.x, ego.y, ego.yaw)


def goal_point(world: World, ego: EgoState, s: float) -> np.ndarray:
    """Ego-frame position of the first route marker at least 5 m ahead of ``s``."""
    markers = world.markers()
    ahead = markers[markers >= s + GOAL_MIN_LEAD]
    target = ahead[0] if len(ahead) else world.route.length
    return to_ego(world.route.point_at(target), ego.x, ego.y, ego.yaw)


def path_blocked(world: World, ego: EgoState, s: float, t: float) -> bool:
    """True if any entity sits in the corridor within 8 m ahead of the ego's front.

    Pedestrians count from 2 m outside the lane so the expert waits for them
    before they step in.
    """
    scene = world.scene(t)
    front = s + EGO_LENGTH / 2
    for poly, ident in zip(scene.polygons, scene.ids):
        centre = poly.mean(axis=0)
        radius = float(np.sqrt(((poly - centre) ** 2).sum(axis=1)).max())
        se, de = world.route.project(centre, s - 5.0, s + STOP_DISTANCE + 15.0)
        gap = se - radius - front
        if se <= s or gap > STOP_DISTANCE:
            continue
        margin = world.lane_halfwidth + (2.0 if ident[0] == "Ped" else 0.0)
        if abs(de) - radius < margin:
            return True
    return False


def expert_policy(world: World, ego: EgoState, t: float = 0.0, s_hint: float | None = None):
    """Privileged driver.

    Returns (ground-truth waypoints [4, 2], control, route arclength).  The
    control is pure pursuit on the route point 4 m ahead at 6 m/s, or a stop
    when :func:`path_blocked`.  Raises :class:`RouteComplete` past the route end.
    """
    s, _ = locate(world, ego, s_hint)
    if s >= world.route.length - 1.0:
        raise RouteComplete
    gt = route_waypoints(world, ego, s)
    aim = to_ego(world.route.point_at(s + LOOKAHEAD), ego.x, ego.y, ego.yaw)
    speed = 0.0 if path_blocked(world, ego, s, t) else EXPERT_SPEED
    return gt, Control(pure_pursuit(float(aim[0]), float(aim[1])), speed), s
