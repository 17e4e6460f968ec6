"""Waypoint prediction: MLP reduction and an autoregressive GRU over waypoint deltas."""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ContractError, DimensionError
from .params import Initializer, Params
from .tensor import Tensor, as_tensor


def init_head(init: Initializer, prefix: str, fused_dim=512, hidden=128, reduced=64) -> None:
    init.linear(f"{prefix}.mlp1", fused_dim, hidden)
    init.linear(f"{prefix}.mlp2", hidden, reduced)
    init.linear(f"{prefix}.gru_in", 4, reduced)
    for gate in ("r", "u", "n"):
        init.fan_in(f"{prefix}.gru.W_{gate}", (reduced, reduced), reduced)
        init.fan_in(f"{prefix}.gru.U_{gate}", (reduced, reduced), reduced)
        init.zeros(f"{prefix}.gru.b_{gate}", (reduced,))
    init.linear(f"{prefix}.delta", reduced, 2)


def reduce_mlp(g, params: Params) -> Tensor:
    """512 -> 128 (relu) -> 64."""
    g = as_tensor(g)
    if g.shape[-1] != params["mlp1.w"].shape[0]:
        raise DimensionError(f"reduce_mlp expects width {params['mlp1.w'].shape[0]}, got {g.shape}")
    h = ops.relu(ops.linear(g, params["mlp1.w"], params["mlp1.b"]))
    return ops.linear(h, params["mlp2.w"], params["mlp2.b"])


def predict_waypoints(feat, goal, params: Params, T: int = 4) -> Tensor:
    """Roll the GRU forward ``T`` steps from hidden state ``feat``.

    Each step feeds [previous waypoint, goal] through an affine map into the
    GRU and adds an affine readout of the new state to the previous waypoint.
    Returns [T, 2] (or [B, T, 2] for batched ``feat``).
    """
    if T < 1:
        raise ContractError(f"need T >= 1, got {T}")
    feat, goal = as_tensor(feat), as_tensor(goal)
    unbatched = feat.ndim == 1
    if unbatched:
        feat, goal = ops.reshape(feat, (1, -1)), ops.reshape(goal, (1, -1))
    if goal.shape != (feat.shape[0], 2):
        raise DimensionError(f"goal {goal.shape} does not match batch of features {feat.shape}")
    if feat.shape[-1] != params["gru.U_r"].shape[0]:
        raise DimensionError(f"feature width {feat.shape[-1]} != GRU width {params['gru.U_r'].shape[0]}")
    gru = params.sub("gru")
    h = feat
    w = Tensor(np.zeros((feat.shape[0], 2)))
    steps = []
    for _ in range(T):
        x = ops.linear(ops.concat([w, goal], axis=-1), params["gru_in.w"], params["gru_in.b"])
        h = ops.gru_cell(x, h, gru)
        w = ops.add(w, ops.linear(h, params["delta.w"], params["delta.b"]))
        steps.append(ops.reshape(w, (w.shape[0], 1, 2)))
    out = ops.concat(steps, axis=1)
    return ops.reshape(out, (T, 2)) if unbatched else out


def l1_waypoint_loss(pred, gt) -> Tensor:
    """Sum over steps of the L1 distance between predicted and true waypoints.

    [T, 2] inputs give a scalar; [B, T, 2] inputs give one loss per sample.
    """
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"waypoint shapes differ: {pred.shape} vs {gt.shape}")
    return ops.sum(ops.abs(ops.sub(pred, gt)), axis=(-2, -1))


def batch_loss(pred, gt) -> Tensor:
    """Mean over the batch of the per-sample summed L1 loss."""
    return ops.mean(l1_waypoint_loss(pred, gt))
