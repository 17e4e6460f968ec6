"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError
from .tensor import Tensor, backward


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-3,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``f`` recomputes a scalar loss from the current values of ``params``.  The
    relative error of each coordinate is |a - n| / max(1, |a|, |n|).  With
    ``max_coords`` set, at most that many coordinates per tensor are probed,
    drawn without replacement from a generator seeded by ``seed``.
    """
    if not (1e-5 <= eps <= 1e-2):
        raise ContractError(f"eps must lie in [1e-5, 1e-2], got {eps}")
    if isinstance(params, Mapping):
        params = [params[k] for k in sorted(params)]
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(f())
    rng = np.random.default_rng(seed)

    worst = 0.0
    for p in params:
        analytic = np.zeros(p.size) if p.grad is None else p.grad.reshape(-1).astype(np.float64)
        flat = p.data.reshape(-1)
        if max_coords is None or max_coords >= p.size:
            coords = range(p.size)
        else:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().item())
            flat[i] = orig - eps
            fm = float(f().item())
            flat[i] = orig
            numeric = (fp - fm) / (2 * eps)
            a = analytic[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
