"""Adam, global-norm clipping and orthogonal initialisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
) -> None:
    """One bias-corrected Adam update, in place on ``params``.

    A missing or ``None`` gradient is treated as zero, so every parameter
    sees the same step counter.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def global_norm(grads: Mapping[str, Optional[np.ndarray]]) -> float:
    total = 0.0
    for g in grads.values():
        if g is not None:
            total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_global_norm(grads: Mapping[str, Optional[np.ndarray]], threshold: float) -> dict:
    """Scale all gradients by ``threshold / norm`` when the joint L2 norm exceeds it."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = global_norm(grads)
    if norm <= threshold:
        return dict(grads)
    scale = threshold / norm
    while True:
        clipped = {k: (None if g is None else g * scale) for k, g in grads.items()}
        # rounding can leave the rescaled norm a few ulps above threshold,
        # which would make a second clip move the gradients again
        if global_norm(clipped) <= threshold:
            return clipped
        scale = np.nextafter(scale, 0.0)


def orthogonal_init(rows: int, cols: int, seed, gain: float = 1.0) -> Tensor:
    """Orthogonal matrix of shape ``(rows, cols)``.

    Orthonormal columns when ``rows >= cols``, orthonormal rows otherwise.
    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("orthogonal_init needs rows, cols >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    # sign fix makes the result uniformly distributed over orthogonal matrices
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if rows < cols:
        q = q.T
    return Tensor(np.ascontiguousarray(gain * q[:rows, :cols]), requires_grad=True)
