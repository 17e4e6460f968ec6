"""Generate a world, look at its sensors, and score the expert and the stop policy.

    python3 demos/drive_world.py [seed]
"""

import sys

import numpy as np

from spatialfuse.world import generate_world
from spatialfuse.world.episode import ExpertDriver, expert_rollout, run_episode, stop_policy
from spatialfuse.world.metrics import format_line


def ascii_bev(bev: np.ndarray) -> str:
    # ego sits at the bottom centre looking up; one character per 2x2 cells
    occ = bev.sum(axis=0)
    occ = occ.reshape(32, 2, 32, 2).max(axis=(1, 3))
    rows = []
    for x in range(31, -1, -1):
        rows.append("".join("#" if occ[x, y] > 0.5 else ("+" if occ[x, y] > 0 else ".") for y in range(31, -1, -1)))
    return "\n".join(rows)


def main(seed: int = 3):
    world = generate_world(seed)
    print(f"seed {seed}: route {world.route.length:.0f} m, {len(world.obstacles)} obstacles, "
          f"{len(world.vehicles)} vehicles, {len(world.pedestrians)} pedestrians")

    # the recorded expert frame with the most lidar returns in view
    ep = expert_rollout(seed)
    f = max(ep.frames, key=lambda fr: fr.bev.sum())
    print(f"t={f.time:.1f}s camera {f.camera.shape} mean {f.camera.mean():.3f}; "
          f"lidar {len(f.points)} points; goal {f.goal.round(2)}; expert waypoints {f.waypoints.round(2).tolist()}")
    print(ascii_bev(f.bev))

    for name, policy in (("expert", ExpertDriver()), ("stop", stop_policy)):
        res = run_episode(policy, world)
        kinds = [e.kind for e in res.events]
        print(f"{name:>6}: {format_line(seed, res.metrics)} events={kinds}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
