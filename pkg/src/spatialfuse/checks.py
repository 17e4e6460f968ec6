"""Registry of finite-difference gradient checks used by ``spatialfuse gradcheck``.

Each entry builds small random inputs (dims <= 8, values in [-2, 2], kept at
least 1e-2 away from relu/sign/abs kinks) and returns a scalar loss closure
plus the tensors to probe.  A fixed random projection turns every op output
into a scalar so that all output coordinates contribute.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .gradcheck import finite_diff_check
from .tensor import Tensor
from .tensor import precision as use_precision

KINK_MARGIN = 1e-2


def _rand(rng, shape, away_from_zero: bool = False) -> Tensor:
    x = rng.uniform(-2.0, 2.0, size=shape)
    if away_from_zero:
        x = np.where(np.abs(x) < KINK_MARGIN, np.copysign(5 * KINK_MARGIN, x), x)
    return Tensor(x, requires_grad=True)


def _readout(rng, out_shape):
    """Scalar loss sum(out * r) with a fixed random r."""
    r = Tensor(rng.uniform(-1.0, 1.0, size=out_shape))
    return lambda out: ops.sum(ops.mul(out, r))


def _case(rng, op: Callable, *shapes, away: bool = False):
    xs = [_rand(rng, s, away) for s in shapes]
    out_shape = op(*xs).shape
    read = _readout(rng, out_shape)
    return (lambda: read(op(*xs))), xs


def _gru_case(rng):
    di, dh, B = 4, 5, 3
    p = {}
    for g in "run":
        p[f"W_{g}"] = _rand(rng, (di, dh))
        p[f"U_{g}"] = _rand(rng, (dh, dh))
        p[f"b_{g}"] = _rand(rng, (dh,))
    x, h = _rand(rng, (B, di)), _rand(rng, (B, dh))
    read = _readout(rng, (B, dh))
    return (lambda: read(ops.gru_cell(x, h, p))), [x, h, *p.values()]


def _attention_case(rng):
    q, k, v = (_rand(rng, (2, 2, 5, 4)) for _ in range(3))
    read = _readout(rng, (2, 2, 5, 4))
    return (lambda: read(ops.attention(q, k, v))), [q, k, v]


def _layer_norm_case(rng):
    x, g, b = _rand(rng, (3, 6)), _rand(rng, (6,)), _rand(rng, (6,))
    read = _readout(rng, (3, 6))
    return (lambda: read(ops.layer_norm(x, g, b))), [x, g, b]


def _conv_case(rng, stride, pad, k):
    x, w, b = _rand(rng, (2, 3, 7, 6)), _rand(rng, (4, 3, k, k)), _rand(rng, (4,))
    out_shape = ops.conv2d(x, w, b, stride, pad).shape
    read = _readout(rng, out_shape)
    return (lambda: read(ops.conv2d(x, w, b, stride, pad))), [x, w, b]


OP_CASES: dict[str, Callable] = {
    "add": lambda r: _case(r, ops.add, (3, 4), (4,)),
    "sub": lambda r: _case(r, ops.sub, (3, 1), (3, 4)),
    "mul": lambda r: _case(r, ops.mul, (2, 3, 4), (3, 4)),
    "neg": lambda r: _case(r, ops.neg, (5,)),
    "scale": lambda r: _case(r, lambda a: ops.scale(a, 0.7), (3, 4)),
    "relu": lambda r: _case(r, ops.relu, (4, 5), away=True),
    "sigmoid": lambda r: _case(r, ops.sigmoid, (4, 5)),
    "tanh": lambda r: _case(r, ops.tanh, (4, 5)),
    "abs": lambda r: _case(r, ops.abs, (4, 5), away=True),
    "sign": lambda r: _case(r, lambda a: ops.mul(ops.sign(a), a), (4, 5), away=True),
    "sum": lambda r: _case(r, lambda a: ops.sum(a, axis=1, keepdims=True), (3, 4, 2)),
    "mean": lambda r: _case(r, lambda a: ops.mean(a, axis=(0, 2)), (3, 4, 2)),
    "reshape": lambda r: _case(r, lambda a: ops.reshape(a, (4, 6)), (2, 3, 4)),
    "transpose": lambda r: _case(r, lambda a: ops.transpose(a, (2, 0, 1)), (2, 3, 4)),
    "getitem": lambda r: _case(r, lambda a: a[1:, ::2], (4, 6)),
    "concat": lambda r: _case(r, lambda a, b: ops.concat([a, b], axis=1), (3, 2), (3, 5)),
    "matmul": lambda r: _case(r, ops.matmul, (2, 3, 4), (4, 5)),
    "linear": lambda r: _case(r, ops.linear, (3, 4), (4, 5), (5,)),
    "conv2d": lambda r: _conv_case(r, 2, 1, 3),
    "conv2d_1x1": lambda r: _conv_case(r, 1, 0, 1),
    "layer_norm": _layer_norm_case,
    "softmax": lambda r: _case(r, ops.softmax, (3, 6)),
    "attention": _attention_case,
    "gru_cell": _gru_case,
}


def end_to_end_case(seed: int = 0, T: int = 4):
    """Full model forward plus L1 loss on a 1-sample batch.

    Residual output weights start nonzero here so every parameter lies on a
    path with nonzero gradient.
    """
    from .head import batch_loss
    from .model import ModelConfig, forward, init_model

    cfg = ModelConfig(T=T, zero_residual=False)
    params = init_model(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    camera = rng.uniform(0.0, 1.0, size=(1, 3, 64, 128))
    bev = rng.uniform(0.0, 1.0, size=(1, 3, 64, 64))
    goal = np.array([[12.0, -1.5]])
    gt = rng.uniform(-1.0, 8.0, size=(1, T, 2))

    def f():
        out = forward(params, camera, bev, goal, cfg)
        return batch_loss(out.waypoints, Tensor(gt))

    return f, params


def run_gradcheck(
    precision: str = "float64",
    eps: float = 1e-5,
    seed: int = 0,
    fault: str | None = None,
    e2e_coords: int = 2,
) -> dict[str, float]:
    """Max relative error per registered op, plus ``end_to_end``."""
    from contextlib import nullcontext

    report: dict[str, float] = {}
    fault_ctx = ops.inject_fault(fault) if fault else nullcontext()
    with use_precision(precision), fault_ctx:
        for i, (name, build) in enumerate(OP_CASES.items()):
            f, xs = build(np.random.default_rng([seed, i]))
            report[name] = finite_diff_check(f, xs, eps=eps)
        f, params = end_to_end_case(seed)
        report["end_to_end"] = finite_diff_check(f, params, eps=eps, max_coords=e2e_coords, seed=seed)
    return report

