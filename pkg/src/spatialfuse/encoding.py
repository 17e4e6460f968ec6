"""Token construction for the fusion transformer.

A reduced feature map f of shape [c, X, Y] becomes X*Y tokens of width c,
flattened row-major over (X, Y): token m sits at x = m // Y, y = m % Y.
Each token then receives its sensor's learnable row and a fixed 2-D sinusoid:

    v[m] = z[m] + s[sensor] + e[m]
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, get_dtype

CAMERA, LIDAR = 0, 1


@dataclass
class TokenSet:
    """Tokens [M, c] (or [B, M, c]) from one sensor, with their grid shape."""

    tokens: Tensor
    sensor_id: int
    spatial: tuple[int, int]

    def __post_init__(self):
        X, Y = self.spatial
        if self.tokens.shape[-2] != X * Y:
            raise DimensionError(f"{self.tokens.shape[-2]} tokens do not fill a {X}x{Y} grid")


def reduce_1x1(F, w, b) -> Tensor:
    """1x1 convolution from C to c <= C channels; spatial size unchanged."""
    F, w = as_tensor(F), as_tensor(w)
    if w.shape[2:] != (1, 1):
        raise DimensionError(f"reduce_1x1 needs a 1x1 kernel, got {w.shape}")
    if w.shape[0] > w.shape[1]:
        raise DimensionError(f"reduce_1x1 maps {w.shape[1]} -> {w.shape[0]} channels; output must not be wider")
    return ops.conv2d(F, w, b)


def flatten_tokens(f: Tensor, sensor_id: int) -> TokenSet:
    """[c, X, Y] or [B, c, X, Y] feature map -> TokenSet of X*Y rows."""
    f = as_tensor(f)
    c, X, Y = f.shape[-3:]
    if f.ndim == 3:
        tok = ops.reshape(ops.transpose(f, (1, 2, 0)), (X * Y, c))
    else:
        tok = ops.reshape(ops.transpose(f, (0, 2, 3, 1)), (f.shape[0], X * Y, c))
    return TokenSet(tok, sensor_id, (X, Y))


def unflatten_tokens(ts: TokenSet) -> Tensor:
    """Inverse of :func:`flatten_tokens`."""
    X, Y = ts.spatial
    t = ts.tokens
    c = t.shape[-1]
    if t.ndim == 2:
        return ops.transpose(ops.reshape(t, (X, Y, c)), (2, 0, 1))
    return ops.transpose(ops.reshape(t, (t.shape[0], X, Y, c)), (0, 3, 1, 2))


@lru_cache(maxsize=None)
def _pe_table(c: int, X: int, Y: int) -> np.ndarray:
    if c % 4:
        raise ConfigError(f"positional encoding width {c} is not divisible by 4")
    if X < 1 or Y < 1:
        raise ConfigError(f"grid {X}x{Y} must be at least 1x1")
    half = c // 2
    omega = 10000.0 ** (-4.0 * np.arange(c // 4) / c)
    xs, ys = np.meshgrid(np.arange(X), np.arange(Y), indexing="ij")
    table = np.empty((X * Y, c), dtype=np.float64)
    for offset, pos in ((0, xs.reshape(-1)), (half, ys.reshape(-1))):
        ang = pos[:, None] * omega[None, :]
        table[:, offset + 0:offset + half:2] = np.sin(ang)
        table[:, offset + 1:offset + half:2] = np.cos(ang)
    table.setflags(write=False)
    return table


def sinusoidal_pe_2d(c: int, X: int, Y: int) -> np.ndarray:
    """Fixed [X*Y, c] table.

    Channels [0, c/2) encode x and [c/2, c) encode y.  Within a half, pair i
    uses frequency 10000^(-4i/c): channel 2i holds sin, channel 2i+1 cos.
    Repeated calls return the same read-only array.
    """
    return _pe_table(int(c), int(X), int(Y))


def encode_tokens(z: TokenSet, s, e) -> TokenSet:
    """v = z + s[sensor_id] + e, row by row."""
    s = as_tensor(s)
    e_arr = e.data if isinstance(e, Tensor) else np.asarray(e)
    M, c = z.tokens.shape[-2:]
    if s.ndim != 2 or s.shape[1] != c:
        raise DimensionError(f"sensor encoding {s.shape} does not match token width {c}")
    if not 0 <= z.sensor_id < s.shape[0]:
        raise DimensionError(f"sensor id {z.sensor_id} outside [0, {s.shape[0]})")
    if e_arr.shape != (M, c):
        raise DimensionError(f"positional table {e_arr.shape} does not match tokens ({M}, {c})")
    e_t = Tensor(e_arr.astype(get_dtype(), copy=False))
    row = ops.getitem(s, slice(z.sensor_id, z.sensor_id + 1))
    v = ops.add(ops.add(z.tokens, row), e_t)
    return TokenSet(v, z.sensor_id, z.spatial)


def concat_tokens(sets: list[TokenSet]) -> tuple[Tensor, list[int]]:
    """Stack token sets along the token axis; returns tokens and per-set counts."""
    if not sets:
        raise DimensionError("concat_tokens needs at least one token set")
    c = sets[0].tokens.shape[-1]
    for ts in sets[1:]:
        if ts.tokens.shape[-1] != c:
            raise DimensionError(f"token widths differ: {c} vs {ts.tokens.shape[-1]}")
    splits = [ts.tokens.shape[-2] for ts in sets]
    if len(sets) == 1:
        return sets[0].tokens, splits
    return ops.concat([ts.tokens for ts in sets], axis=-2), splits


def split_tokens(tokens: Tensor, splits: list[int]) -> list[Tensor]:
    """Inverse of :func:`concat_tokens`."""
    if sum(splits) != tokens.shape[-2]:
        raise DimensionError(f"splits {splits} do not cover {tokens.shape[-2]} tokens")
    if len(splits) == 1:
        return [tokens]
    out, start = [], 0
    for n in splits:
        idx = (Ellipsis, slice(start, start + n), slice(None))
        out.append(ops.getitem(tokens, idx))
        start += n
    return out
