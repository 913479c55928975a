"""Central finite differences, used as the independent oracle for backward()."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tape, Tensor


def numerical_grad(fn: Callable[[], float], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn / d param by central differences, perturbing ``param.data`` in place."""
    data = param.data
    grad = np.zeros(data.shape)
    for i in np.ndindex(data.shape):  # index in place; reshape may copy a non-contiguous array
        orig = data[i]
        data[i] = orig + h
        up = fn()
        data[i] = orig - h
        down = fn()
        data[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    h: float = 1e-5,
) -> dict[str, float]:
    """Compare tape gradients with finite differences for each named parameter.

    ``loss_fn`` must rebuild the loss from scratch on every call and be
    deterministic. Returns the relative error per parameter.
    """
    params = list(params)
    for _, p in params:
        p.grad = None  # drop anything left over from an earlier backward
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params}

    def scalar() -> float:
        return float(loss_fn().data)

    return {name: relative_error(analytic[name], numerical_grad(scalar, p, h)) for name, p in params}
