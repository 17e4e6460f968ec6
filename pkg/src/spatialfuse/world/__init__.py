"""Procedural 2-D driving world, toy sensors, expert driver and closed-loop metrics."""

from .driving import Control, EgoState, expert_policy, step_dynamics, waypoint_controller
from .episode import Episode, ExpertDriver, Observation, expert_rollout, run_episode, stop_policy
from .metrics import DriveMetrics, InfractionEvent, Limits, compute_metrics, detect_infractions
from .render import render_camera, render_lidar
from .world import World, WorldConfig, generate_world
