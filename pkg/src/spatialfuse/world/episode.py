"""Expert data collection and closed-loop evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..sensors import BevConfig, bev_histogram
from .driving import (
    Control,
    EgoState,
    RouteComplete,
    expert_policy,
    goal_point,
    locate,
    step_dynamics,
    waypoint_controller,
)
from .geometry import to_ego, to_world
from .metrics import DriveMetrics, InfractionEvent, InfractionMonitor, Limits
from .render import render_camera, render_lidar
from .world import World, WorldConfig, generate_world

FRAME_HZ = 2


@dataclass
class Observation:
    camera: np.ndarray
    points: np.ndarray
    bev: np.ndarray
    goal: np.ndarray


@dataclass
class Frame:
    ego: EgoState
    time: float
    camera: np.ndarray
    points: np.ndarray
    bev: np.ndarray
    goal: np.ndarray
    waypoints: np.ndarray


@dataclass
class Episode:
    seed: int
    world: World
    frames: list[Frame] = field(default_factory=list)
    duration: float = 0.0


@dataclass
class EpisodeResult:
    trajectory: np.ndarray
    events: list[InfractionEvent]
    metrics: DriveMetrics
    aborted: str | None = None


class Policy(Protocol):
    def __call__(self, obs: Observation) -> np.ndarray: ...


def start_state(world: World) -> EgoState:
    x, y = world.route.points[0]
    return EgoState(float(x), float(y), float(world.route.heading_at(0.0)), 0.0)


def observe(world: World, ego: EgoState, t: float, s: float, bev_cfg: BevConfig = BevConfig()) -> Observation:
    points = render_lidar(world, ego, t)
    return Observation(
        camera=render_camera(world, ego, t, s),
        points=points,
        bev=bev_histogram(points, bev_cfg),
        goal=goal_point(world, ego, s).astype(np.float32),
    )


def expert_rollout(
    seed: int,
    cfg: WorldConfig = WorldConfig(),
    limits: Limits = Limits(),
    steer_noise: float = 0.0,
    record: bool = True,
) -> Episode:
    """Drive the expert through the world for ``seed`` and record frames at 2 Hz.

    With ``steer_noise`` > 0 the executed steering gets a slowly varying
    perturbation (labels stay the expert's), so the data shows recoveries.
    The frame count is floor(duration * 2).
    """
    world = generate_world(seed, cfg)
    ep = Episode(seed, world)
    noise_rng = np.random.default_rng([seed, 1])
    ego = start_state(world)
    mon = InfractionMonitor(world, limits)
    steps_per_frame = round(1.0 / (FRAME_HZ * limits.dt))
    bias = 0.0
    t, k, s = 0.0, 0, 0.0
    while True:
        try:
            gt, ctrl, s = expert_policy(world, ego, t, s)
        except RouteComplete:
            break
        if record and k % steps_per_frame == 0:
            obs = observe(world, ego, t, s)
            ep.frames.append(Frame(ego, t, obs.camera, obs.points, obs.bev, obs.goal, gt.astype(np.float32)))
        if steer_noise > 0:
            bias = 0.9 * bias + steer_noise * noise_rng.normal()
            ctrl = Control(ctrl.steer + bias, ctrl.target_speed)
        ego = step_dynamics(ego, ctrl, limits.dt)
        k += 1
        t = k * limits.dt
        mon.update(t, ego)
        if mon.done:
            break
    ep.duration = k * limits.dt
    ep.frames = ep.frames[: int(np.floor(ep.duration * FRAME_HZ + 1e-9))]
    return ep


class ExpertDriver:
    """Privileged policy for closed-loop runs: emits controls, not waypoints."""

    privileged = True

    def control(self, world: World, ego: EgoState, t: float, s: float) -> Control:
        try:
            _, ctrl, _ = expert_policy(world, ego, t, s)
        except RouteComplete:
            return Control(0.0, 0.0)
        return ctrl


def stop_policy(obs: Observation) -> np.ndarray:
    """Always predicts four waypoints at the origin."""
    return np.zeros((4, 2), dtype=np.float32)


def run_episode(policy, world: World, limits: Limits = Limits()) -> EpisodeResult:
    """Closed-loop rollout at 10 Hz physics with 2 Hz perception.

    Predicted waypoints are pinned to the world at inference time and
    re-expressed in the current ego frame every physics step until the next
    inference.
    """
    ego = start_state(world)
    mon = InfractionMonitor(world, limits)
    rows = [(0.0, ego.x, ego.y, ego.yaw, ego.speed)]
    held: np.ndarray | None = None
    aborted = None
    privileged = getattr(policy, "privileged", False)
    t, k = 0.0, 0
    while not mon.done:
        s = mon.s
        if privileged:
            ctrl = policy.control(world, ego, t, s)
        else:
            if k % limits.infer_every == 0:
                wps = np.asarray(policy(observe(world, ego, t, s)), dtype=np.float64)
                if not np.all(np.isfinite(wps)):
                    aborted = f"non-finite waypoints at t={t:.1f}s"
                    break
                held = to_world(wps, ego.x, ego.y, ego.yaw)
            ctrl = waypoint_controller(to_ego(held, ego.x, ego.y, ego.yaw), ego.speed)
        ego = step_dynamics(ego, ctrl, limits.dt)
        k += 1
        t = k * limits.dt
        mon.update(t, ego)
        rows.append((t, ego.x, ego.y, ego.yaw, ego.speed))
    return EpisodeResult(np.array(rows), list(mon.events), mon.metrics(), aborted)
