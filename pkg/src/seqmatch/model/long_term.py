"""Long-term behaviour encoder and the long/short-term fusion step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .. import core
from ..core import Tensor


def pool_subset(
    idx: np.ndarray,
    mask: np.ndarray,
    table: Tensor,
    proj: Tensor,
    e_u: Tensor,
) -> Tensor:
    """Attention-pool one feature subset with the profile embedding as query.

    ``idx``/``mask`` are (B, L); entries are embedded by ``table`` and mapped
    to width d by ``proj``. Rows whose mask is all False pool to zero.
    """
    B, L = idx.shape
    g = core.matmul(core.take(table, idx), proj)  # (B, L, d)
    d = g.shape[-1]
    scores = core.tsum(g * core.reshape(e_u, (B, 1, d)), axis=-1)  # (B, L)
    alpha = core.softmax(scores, axis=-1, mask=mask)
    return core.tsum(core.reshape(alpha, (B, L, 1)) * g, axis=1)


@dataclass
class LongTermParams:
    tables: Mapping[str, Tensor]
    proj: Mapping[str, Tensor]
    W_p: Tensor  # (|F| * d, d)
    b_p: Tensor  # (d,)


def encode_long_term(
    subsets: Mapping[str, tuple[np.ndarray, np.ndarray]],
    params: LongTermParams,
    e_u: Tensor,
    features: Sequence[str],
) -> Tensor:
    """``tanh(W_p concat(z_f) + b_p)`` over the features in fixed order."""
    pooled = [pool_subset(*subsets[f], params.tables[f], params.proj[f], e_u) for f in features]
    z = pooled[0] if len(pooled) == 1 else core.concat(pooled, axis=-1)
    return core.tanh(core.matmul(z, params.W_p) + params.b_p)


@dataclass
class FusionParams:
    W_user: Optional[Tensor] = None  # gate weights (d, d)
    W_short: Optional[Tensor] = None
    W_long: Optional[Tensor] = None
    b_gate: Optional[Tensor] = None
    W_concat: Optional[Tensor] = None  # (2d, d) for concat mode
    b_concat: Optional[Tensor] = None


def _align(x: Tensor, like: Tensor) -> Tensor:
    # (B, d) against a (B, T, d) short-term tensor
    if x.ndim == like.ndim:
        return x
    return core.reshape(x, (x.shape[0], 1, x.shape[-1]))


def gate_values(e_u: Tensor, s: Tensor, p: Tensor, params: FusionParams) -> Tensor:
    pre = (
        _align(core.matmul(e_u, params.W_user), s)
        + core.matmul(s, params.W_short)
        + _align(core.matmul(p, params.W_long), s)
        + params.b_gate
    )
    return core.sigmoid(pre)


def gated_fuse(e_u: Tensor, s: Tensor, p: Tensor, params: FusionParams, mode: str = "gated") -> Tensor:
    """Combine short-term ``s`` and long-term ``p`` into the behaviour vector.

    ``s`` may carry a time axis (B, T, d); ``e_u`` and ``p`` are (B, d).
    """
    if mode == "short_only":
        return s
    if mode == "gated":
        G = gate_values(e_u, s, p, params)
        pa = _align(p, s)
        return (1.0 - G) * pa + G * s
    pa = _align(p, s)
    if mode == "add":
        return s + pa
    if mode == "multiply":
        return s * pa
    if mode == "concat":
        if s.ndim == 3:
            pa = pa + np.zeros((1, s.shape[1], 1))
        return core.matmul(core.concat([s, pa], axis=-1), params.W_concat) + params.b_concat
    raise ValueError(f"unknown fusion mode {mode!r}")
