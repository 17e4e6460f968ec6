"""Named parameter storage and initialisers."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor, get_dtype


class Params(dict):
    """Flat mapping from dotted names to trainable tensors."""

    def sub(self, prefix: str) -> "Params":
        """View of the entries under ``prefix.``, with the prefix stripped."""
        cut = len(prefix) + 1
        return Params({k[cut:]: v for k, v in self.items() if k.startswith(prefix + ".")})

    def ordered(self) -> Iterator[tuple[str, Tensor]]:
        for k in sorted(self):
            yield k, self[k]

    def zero_grad(self) -> None:
        for p in self.values():
            p.grad = None

    def num_elements(self) -> int:
        return int(sum(p.size for p in self.values()))

    def astype(self, dtype) -> "Params":
        """Copy with every tensor cast to ``dtype`` (regardless of the global precision)."""
        out = Params()
        for k, p in self.items():
            t = Tensor(p.data, requires_grad=True, name=k)
            t.data = p.data.astype(dtype)
            out[k] = t
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.ordered()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "Params":
        return cls({k: Tensor(np.array(v), requires_grad=True, name=k) for k, v in arrays.items()})


class Initializer:
    """Adds freshly initialised parameters to a :class:`Params` store.

    Draws come from a single seeded generator, so creation order matters and
    is fixed by the model builder.
    """

    def __init__(self, params: Params, seed: int):
        self.params = params
        self.rng = np.random.default_rng(seed)

    def _add(self, name: str, arr: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(arr.astype(get_dtype()), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def uniform(self, name: str, shape, half_width: float) -> Tensor:
        return self._add(name, self.rng.uniform(-half_width, half_width, size=shape))

    def fan_in(self, name: str, shape, fan_in: int) -> Tensor:
        """Zero-mean uniform with half-width sqrt(1 / fan_in)."""
        return self.uniform(name, shape, float(np.sqrt(1.0 / fan_in)))

    def zeros(self, name: str, shape) -> Tensor:
        return self._add(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self._add(name, np.ones(shape))

    def linear(self, prefix: str, d_in: int, d_out: int, zero: bool = False, bias: bool = True) -> None:
        if zero:
            self.zeros(f"{prefix}.w", (d_in, d_out))
        else:
            self.fan_in(f"{prefix}.w", (d_in, d_out), d_in)
        if bias:
            self.zeros(f"{prefix}.b", (d_out,))

    def conv(self, prefix: str, c_in: int, c_out: int, k: int, zero: bool = False) -> None:
        if zero:
            self.zeros(f"{prefix}.w", (c_out, c_in, k, k))
        else:
            self.fan_in(f"{prefix}.w", (c_out, c_in, k, k), c_in * k * k)
        self.zeros(f"{prefix}.b", (c_out,))
