"""Dataset persistence, the Adam optimiser and the training loop."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import container
from .head import batch_loss
from .model import ModelConfig, forward, init_model, predict
from .params import Params
from .tensor import Tensor, backward
from .world.episode import Episode, Observation


# ---------------------------------------------------------------------------
# dataset on disk
# ---------------------------------------------------------------------------

def episode_dir(root: str | os.PathLike, seed: int) -> Path:
    return Path(root) / f"episode_{seed:06d}"


def write_episode(root: str | os.PathLike, ep: Episode) -> Path:
    """One directory per episode: ``data.sfse`` tensors plus ``manifest.txt``."""
    d = episode_dir(root, ep.seed)
    d.mkdir(parents=True, exist_ok=True)
    n = len(ep.frames)
    arrays = {
        "camera": np.stack([f.camera for f in ep.frames]) if n else np.zeros((0, 3, 64, 128)),
        "bev": np.stack([f.bev for f in ep.frames]) if n else np.zeros((0, 3, 64, 64)),
        "goal": np.stack([f.goal for f in ep.frames]) if n else np.zeros((0, 2)),
        "waypoints": np.stack([f.waypoints for f in ep.frames]) if n else np.zeros((0, 4, 2)),
    }
    container.save(d / "data.sfse", arrays)
    lines = [f"seed={ep.seed} frames={n} duration={ep.duration:.1f}"]
    for i, f in enumerate(ep.frames):
        lines.append(f"frame={i} t={f.time:.1f} x={f.ego.x:.4f} y={f.ego.y:.4f} "
                     f"yaw={f.ego.yaw:.6f} speed={f.ego.speed:.4f} points={len(f.points)}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d


@dataclass
class Dataset:
    camera: np.ndarray
    bev: np.ndarray
    goal: np.ndarray
    waypoints: np.ndarray
    episodes: list[int]

    def __len__(self) -> int:
        return len(self.camera)


def load_dataset(root: str | os.PathLike) -> Dataset:
    """Concatenate every ``episode_*`` directory under ``root`` in seed order."""
    dirs = sorted(Path(root).glob("episode_*"))
    if not dirs:
        raise FileNotFoundError(f"no episodes under {root}")
    parts = {"camera": [], "bev": [], "goal": [], "waypoints": []}
    seeds = []
    for d in dirs:
        arrays = container.load(d / "data.sfse")
        header = (d / "manifest.txt").read_text().splitlines()
        n_manifest = len(header) - 1
        if n_manifest != len(arrays["camera"]):
            raise ValueError(f"{d}: manifest lists {n_manifest} frames, tensors hold {len(arrays['camera'])}")
        for k in parts:
            parts[k].append(arrays[k])
        seeds.append(int(d.name.split("_")[1]))
    return Dataset(*(np.concatenate(parts[k]) for k in ("camera", "bev", "goal", "waypoints")), episodes=seeds)


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params: Params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in self.params.ordered():
            if p.grad is None:
                continue
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def batch_order(n: int, batch_size: int, steps: int, seed: int) -> list[np.ndarray]:
    """Index batches for ``steps`` steps: a fresh seeded permutation per epoch."""
    rng = np.random.default_rng(seed)
    out, perm, pos = [], rng.permutation(n), 0
    while len(out) < steps:
        if pos + batch_size > n:
            perm, pos = rng.permutation(n), 0
        out.append(perm[pos:pos + min(batch_size, n)])
        pos += batch_size
    return out


def dataset_loss(params: Params, data: Dataset, cfg: ModelConfig, batch_size: int = 8) -> float:
    """Mean per-sample L1 waypoint loss over the whole dataset, no gradients."""
    total = 0.0
    for i in range(0, len(data), batch_size):
        sl = slice(i, i + batch_size)
        pred = predict(params, data.camera[sl], data.bev[sl], data.goal[sl], cfg)
        total += float(np.abs(pred - data.waypoints[sl]).sum())
    return total / len(data)


@dataclass
class TrainResult:
    params: Params
    losses: list[float]
    best_params: dict[str, np.ndarray]
    best_loss: float
    nan_step: int | None = None


def train(
    data: Dataset,
    cfg: ModelConfig,
    steps: int,
    seed: int = 0,
    lr: float = 1e-3,
    batch_size: int = 8,
    betas=(0.9, 0.999),
    adam_eps: float = 1e-8,
    params: Params | None = None,
    log: Callable[[int, float], None] | None = None,
    log_every: int = 10,
) -> TrainResult:
    """Minimise the batch-mean L1 waypoint loss with Adam.

    Stops early (``nan_step`` set) on a non-finite loss; the best parameters
    seen so far are kept in ``best_params``.
    """
    params = init_model(cfg, seed) if params is None else params
    opt = Adam(params, lr, betas[0], betas[1], adam_eps)
    losses: list[float] = []
    best_loss, best = np.inf, params.state()
    for step, idx in enumerate(batch_order(len(data), batch_size, steps, seed), 1):
        params.zero_grad()
        out = forward(params, data.camera[idx], data.bev[idx], data.goal[idx], cfg)
        loss = batch_loss(out.waypoints, Tensor(data.waypoints[idx]))
        value = float(loss.item())
        if not np.isfinite(value):
            return TrainResult(params, losses, best, best_loss, nan_step=step)
        if value < best_loss:
            best_loss, best = value, params.state()
        backward(loss)
        opt.step()
        losses.append(value)
        if log is not None and (step % log_every == 0 or step == 1):
            log(step, value)
    return TrainResult(params, losses, best, best_loss)


class ModelPolicy:
    """Closed-loop policy backed by model parameters."""

    def __init__(self, params: Params, cfg: ModelConfig = ModelConfig()):
        self.params = params
        self.cfg = cfg

    def __call__(self, obs: Observation) -> np.ndarray:
        return predict(self.params, obs.camera[None], obs.bev[None], obs.goal[None], self.cfg)[0]
