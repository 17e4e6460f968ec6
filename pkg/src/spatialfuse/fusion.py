"""Self-attention fusion of camera and LiDAR tokens at several backbone resolutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .encoding import (
    CAMERA,
    LIDAR,
    concat_tokens,
    encode_tokens,
    flatten_tokens,
    reduce_1x1,
    sinusoidal_pe_2d,
    split_tokens,
    TokenSet,
    unflatten_tokens,
)
from .errors import ConfigError, DimensionError
from .params import Initializer, Params
from .sensors import backbone_stage
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class FusionConfig:
    heads: int = 4
    layers_per_resolution: int = 2
    c: int = 64
    mlp_ratio: int = 2
    fusion_stages: tuple[int, ...] = (1, 2, 3)
    dropout: float = 0.0
    sensor_init: float = 0.02

    def __post_init__(self):
        if self.c % self.heads:
            raise ConfigError(f"token width {self.c} not divisible by {self.heads} heads")
        if self.c % 4:
            raise ConfigError(f"token width {self.c} must be divisible by 4 for the 2-D sinusoid")
        if self.dropout != 0:
            raise ConfigError("dropout is not supported")

    def width_at(self, C: int) -> int:
        """Token width at a stage with C channels: c, capped so the 1x1 reduction never widens."""
        return min(self.c, C)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def multi_head_self_attention(tokens, params: Params, heads: int, return_weights: bool = False):
    """Scaled dot-product self-attention over the rows of ``tokens`` ([M, c] or [B, M, c]).

    Queries, keys and values are bias-free projections of the same tokens.
    """
    x = as_tensor(tokens)
    unbatched = x.ndim == 2
    if unbatched:
        x = ops.reshape(x, (1,) + x.shape)
    B, M, c = x.shape
    if c % heads:
        raise DimensionError(f"width {c} not divisible by {heads} heads")
    if params["w_q"].shape != (c, c):
        raise DimensionError(f"projection {params['w_q'].shape} does not match width {c}")
    dh = c // heads

    def split_heads(t):
        return ops.transpose(ops.reshape(t, (B, M, heads, dh)), (0, 2, 1, 3))

    q = split_heads(ops.matmul(x, params["w_q"]))
    k = split_heads(ops.matmul(x, params["w_k"]))
    v = split_heads(ops.matmul(x, params["w_v"]))
    if return_weights:
        mixed, attn = ops.attention(q, k, v, keep_weights=True)
    else:
        mixed = ops.attention(q, k, v)
    mixed = ops.reshape(ops.transpose(mixed, (0, 2, 1, 3)), (B, M, c))
    out = ops.matmul(mixed, params["w_o"])
    if unbatched:
        out = ops.reshape(out, (M, c))
    return (out, attn) if return_weights else out


def transformer_block(tokens, params: Params, heads: int) -> Tensor:
    """Pre-norm block: x + MHSA(LN(x)), then x + MLP(LN(x))."""
    x = as_tensor(tokens)
    h = ops.layer_norm(x, params["ln1.g"], params["ln1.b"])
    x = ops.add(x, multi_head_self_attention(h, params.sub("attn"), heads))
    h = ops.layer_norm(x, params["ln2.g"], params["ln2.b"])
    h = ops.relu(ops.linear(h, params["mlp1.w"], params["mlp1.b"]))
    return ops.add(x, ops.linear(h, params["mlp2.w"], params["mlp2.b"]))


def init_block(init: Initializer, prefix: str, c: int, mlp_ratio: int, zero_out: bool = True) -> None:
    init.ones(f"{prefix}.ln1.g", (c,))
    init.zeros(f"{prefix}.ln1.b", (c,))
    for name in ("w_q", "w_k", "w_v"):
        init.fan_in(f"{prefix}.attn.{name}", (c, c), c)
    if zero_out:
        init.zeros(f"{prefix}.attn.w_o", (c, c))
    else:
        init.fan_in(f"{prefix}.attn.w_o", (c, c), c)
    init.ones(f"{prefix}.ln2.g", (c,))
    init.zeros(f"{prefix}.ln2.b", (c,))
    init.linear(f"{prefix}.mlp1", c, mlp_ratio * c)
    init.linear(f"{prefix}.mlp2", mlp_ratio * c, c, zero=zero_out)


# ---------------------------------------------------------------------------
# per-resolution fusion
# ---------------------------------------------------------------------------

def init_fusion_stage(init: Initializer, prefix: str, C: int, cfg: FusionConfig, zero_out: bool = True) -> None:
    """Parameters for one resolution.  ``zero_out`` zeroes every residual output projection."""
    c = cfg.width_at(C)
    init.uniform(f"{prefix}.sensor", (2, c), cfg.sensor_init)
    for sensor in ("cam", "lid"):
        init.conv(f"{prefix}.{sensor}_in", C, c, 1)
        init.conv(f"{prefix}.{sensor}_out", c, C, 1, zero=zero_out)
    for layer in range(cfg.layers_per_resolution):
        init_block(init, f"{prefix}.block{layer}", c, cfg.mlp_ratio, zero_out)


def fuse_at_resolution(F_cam, F_lid, params: Params, cfg: FusionConfig) -> tuple[Tensor, Tensor]:
    """Fuse two same-channel feature maps and add the result back residually.

    reduce 1x1 -> tokens -> (+ sensor row + 2-D sinusoid) -> concat -> blocks
    -> split -> maps -> expand 1x1 -> F + delta
    """
    F_cam, F_lid = as_tensor(F_cam), as_tensor(F_lid)
    if F_cam.shape[-3] != F_lid.shape[-3]:
        raise DimensionError(f"camera map {F_cam.shape} and lidar map {F_lid.shape} differ in channels")
    sets = []
    for F, sensor, sid in ((F_cam, "cam", CAMERA), (F_lid, "lid", LIDAR)):
        f = reduce_1x1(F, params[f"{sensor}_in.w"], params[f"{sensor}_in.b"])
        z = flatten_tokens(f, sid)
        e = sinusoidal_pe_2d(z.tokens.shape[-1], *z.spatial)
        sets.append(encode_tokens(z, params["sensor"], e))
    tokens, splits = concat_tokens(sets)
    for layer in range(cfg.layers_per_resolution):
        tokens = transformer_block(tokens, params.sub(f"block{layer}"), cfg.heads)
    out = []
    for F, sensor, ts, part in zip((F_cam, F_lid), ("cam", "lid"), sets, split_tokens(tokens, splits)):
        f = unflatten_tokens(TokenSet(part, ts.sensor_id, ts.spatial))
        delta = ops.conv2d(f, params[f"{sensor}_out.w"], params[f"{sensor}_out.b"])
        out.append(ops.add(F, delta))
    return out[0], out[1]


def multi_resolution_fusion(
    camera,
    bev,
    cam_params: Params,
    lid_params: Params,
    fusion_params: Params,
    cfg: FusionConfig,
    n_stages: int = 4,
    trace: list | None = None,
) -> tuple[list[Tensor], list[Tensor]]:
    """Run both backbones stage by stage, fusing after every stage in ``cfg.fusion_stages``.

    The fused maps of stage k feed backbone stage k + 1.  Returns the two
    pyramids of (post-fusion) stage outputs.  Each fused stage index is
    appended to ``trace`` when given.
    """
    for k in cfg.fusion_stages:
        if not 0 <= k < n_stages:
            raise ConfigError(f"fusion stage {k} outside the {n_stages}-stage pyramid")
    x_cam, x_lid = as_tensor(camera), as_tensor(bev)
    cam_pyr, lid_pyr = [], []
    for k in range(n_stages):
        x_cam = backbone_stage(x_cam, cam_params, k)
        x_lid = backbone_stage(x_lid, lid_params, k)
        if k in cfg.fusion_stages:
            try:
                x_cam, x_lid = fuse_at_resolution(x_cam, x_lid, fusion_params.sub(f"stage{k}"), cfg)
            except (DimensionError, ConfigError) as exc:
                raise type(exc)(f"fusion stage {k}: {exc}") from exc
            if trace is not None:
                trace.append(k)
        cam_pyr.append(x_cam)
        lid_pyr.append(x_lid)
    return cam_pyr, lid_pyr


def global_feature(cam_final, lid_final, params: Params) -> Tensor:
    """Average-pool both final maps, concatenate (camera first), affine to 512, relu."""
    cam_final, lid_final = as_tensor(cam_final), as_tensor(lid_final)
    if cam_final.shape[-3] != lid_final.shape[-3]:
        raise DimensionError(f"final maps {cam_final.shape} and {lid_final.shape} differ in channels")
    pooled = ops.concat([ops.mean(cam_final, axis=(-2, -1)), ops.mean(lid_final, axis=(-2, -1))], axis=-1)
    if pooled.shape[-1] != params["w"].shape[0]:
        raise DimensionError(f"pooled width {pooled.shape[-1]} != projection input {params['w'].shape[0]}")
    return ops.relu(ops.linear(pooled, params["w"], params["b"]))
