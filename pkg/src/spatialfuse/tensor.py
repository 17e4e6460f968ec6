"""Reverse-mode automatic differentiation on top of numpy arrays.

Every differentiable operation creates a new :class:`Tensor` whose node id is
drawn from a global, strictly increasing counter.  The ids double as the
append order of the gradient graph: :func:`backward` visits reachable nodes in
strictly decreasing id order, so the accumulation order is fixed and a run is
reproducible bit for bit.

Model math runs in 32-bit floats.  :func:`precision` switches newly created
tensors to 64-bit for finite-difference checks.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError

_DTYPES = {"float32": np.float32, "float64": np.float64}
_state = {"dtype": np.float32, "debug": False}
_ids = itertools.count(1)


def get_dtype():
    return _state["dtype"]


def set_dtype(name: str) -> None:
    if name not in _DTYPES:
        raise ContractError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _state["dtype"] = _DTYPES[name]


@contextmanager
def precision(name: str):
    """Temporarily create tensors in ``name`` precision ('float32' or 'float64')."""
    old = _state["dtype"]
    set_dtype(name)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextmanager
def debug_checks(enabled: bool = True):
    """Raise on any non-finite forward result while active."""
    old = _state["debug"]
    _state["debug"] = enabled
    try:
        yield
    finally:
        _state["debug"] = old


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """An n-dimensional float array that can take part in a gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_id")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != _state["dtype"]:
            arr = arr.astype(_state["dtype"])
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op = "leaf"
        self._id = next(_ids)

    # -- construction -------------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Iterable["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        parents = tuple(parents)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out._op = op
        out._id = next(_ids)
        if _state["debug"] and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite output from {op}")
        return out

    # -- array-like surface -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operators are bound in ops.py to avoid a circular import
    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Calling this twice without clearing grads adds the gradients twice.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in nodes:
            continue
        nodes[node._id] = node
        stack.extend(p for p in node._parents if p.requires_grad)

    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.pop(nid, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pid = parent._id
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
