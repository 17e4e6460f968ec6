"""End-to-end model: backbones, multi-resolution fusion, fused vector and waypoint head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fusion import FusionConfig, global_feature, init_fusion_stage, multi_resolution_fusion
from .head import init_head, predict_waypoints, reduce_mlp
from .params import Initializer, Params
from .sensors import STAGE_CHANNELS, init_backbone
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class ModelConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    channels: tuple[int, ...] = STAGE_CHANNELS
    fused_dim: int = 512
    mlp_hidden: int = 128
    reduced_dim: int = 64
    T: int = 4
    zero_residual: bool = True


@dataclass
class ModelOutput:
    cam_pyramid: list[Tensor]
    lid_pyramid: list[Tensor]
    fused: Tensor
    reduced: Tensor
    waypoints: Tensor


def init_model(cfg: ModelConfig = ModelConfig(), seed: int = 0) -> Params:
    params = Params()
    init = Initializer(params, seed)
    init_backbone(init, "cam", 3, cfg.channels)
    init_backbone(init, "lid", 3, cfg.channels)
    for k in cfg.fusion.fusion_stages:
        init_fusion_stage(init, f"fusion.stage{k}", cfg.channels[k], cfg.fusion, cfg.zero_residual)
    init.linear("global", 2 * cfg.channels[-1], cfg.fused_dim)
    init_head(init, "head", cfg.fused_dim, cfg.mlp_hidden, cfg.reduced_dim)
    return params


def fusion_param_names(params: Params) -> list[str]:
    return sorted(k for k in params if k.startswith("fusion."))


def head_param_names(params: Params) -> list[str]:
    return sorted(k for k in params if k.startswith("head."))


def forward(params: Params, camera, bev, goal, cfg: ModelConfig = ModelConfig(), trace: list | None = None) -> ModelOutput:
    """Run the full model on one sample ([3,64,128], [3,64,64], [2]) or a batch."""
    camera, bev, goal = as_tensor(camera), as_tensor(bev), as_tensor(goal)
    cam_pyr, lid_pyr = multi_resolution_fusion(
        camera, bev, params.sub("cam"), params.sub("lid"), params.sub("fusion"),
        cfg.fusion, n_stages=len(cfg.channels), trace=trace,
    )
    fused = global_feature(cam_pyr[-1], lid_pyr[-1], params.sub("global"))
    reduced = reduce_mlp(fused, params.sub("head"))
    wps = predict_waypoints(reduced, goal, params.sub("head"), cfg.T)
    return ModelOutput(cam_pyr, lid_pyr, fused, reduced, wps)


def predict(params: Params, camera: np.ndarray, bev: np.ndarray, goal: np.ndarray, cfg: ModelConfig = ModelConfig()) -> np.ndarray:
    """Waypoints as a plain array, without keeping a gradient graph."""
    frozen = Params({k: Tensor(v.data) for k, v in params.items()})
    return forward(frozen, camera, bev, goal, cfg).waypoints.data.copy()
