"""Short-term session encoder: stacked residual LSTM, multi-head self-attention, user attention.

Everything works on batches laid out ``(batch, time, d)`` with row vectors,
so a weight stored as ``(d_in, d_out)`` is applied as ``x @ W``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import core
from ..core import Tensor


@dataclass
class LstmLayer:
    """Gate blocks are packed along the output axis in the order input, forget, output, cell."""

    W_in: Tensor  # (d, 4d), applied to the layer input
    W_rec: Tensor  # (d, 4d), applied to the previous hidden state
    b: Tensor  # (4d,)


def lstm_layer(x: Tensor, layer: LstmLayer) -> Tensor:
    """Run one LSTM layer over ``x`` (B, T, d) from zero initial state."""
    B, T, d = x.shape
    pre = core.matmul(x, layer.W_in) + layer.b  # (B, T, 4d), input part for all steps
    h: Optional[Tensor] = None
    c: Optional[Tensor] = None
    outputs = []
    for t in range(T):
        z = pre[:, t, :]
        if h is not None:
            z = z + core.matmul(h, layer.W_rec)
        gates = core.sigmoid(z[:, : 3 * d])
        cand = core.tanh(z[:, 3 * d :])
        i_g, f_g, o_g = gates[:, :d], gates[:, d : 2 * d], gates[:, 2 * d :]
        c = i_g * cand if c is None else f_g * c + i_g * cand
        h = o_g * core.tanh(c)
        outputs.append(h)
    return core.stack(outputs, axis=1)


def lstm_forward(
    embedded: Tensor,
    layers: Sequence[LstmLayer],
    dropout_p: float = 0.0,
    training: bool = False,
    rng=None,
) -> Tensor:
    """Stacked LSTM; layers after the first get dropout on their input and a residual add."""
    if embedded.ndim == 2:
        embedded = core.reshape(embedded, (1, *embedded.shape))
    if embedded.shape[1] == 0:
        raise ValueError("lstm_forward needs a non-empty sequence")
    out = lstm_layer(embedded, layers[0])
    for layer in layers[1:]:
        inp = core.dropout(out, dropout_p, training, rng)
        out = lstm_layer(inp, layer) + inp
    return out


@dataclass
class AttentionParams:
    W_Q: Tensor  # (d, h*d_k); columns k*d_k:(k+1)*d_k belong to head k
    W_K: Tensor
    W_V: Tensor
    W_O: Tensor  # (h*d_k, d)
    ln_gain: Tensor
    ln_bias: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, T, d = x.shape
    return core.transpose(core.reshape(x, (B, T, heads, d // heads)), (0, 2, 1, 3))


def causal_mask(T: int) -> np.ndarray:
    return np.tril(np.ones((T, T), dtype=bool))


def multi_head_self_attention(
    X: Tensor,
    params: AttentionParams,
    heads: int,
    causal: bool = True,
    scaled: bool = False,
    residual_norm: bool = True,
) -> tuple[Tensor, np.ndarray]:
    """Return the attended sequence (B, T, d) and attention weights (B, heads, T, T).

    Scores are plain dot products of query and key unless ``scaled``.
    Post-norm: ``layer_norm(X + W_O concat(heads))`` when ``residual_norm``.
    """
    B, T, d = X.shape
    if d % heads:
        raise ValueError(f"heads ({heads}) must divide d ({d})")
    Q = _split_heads(core.matmul(X, params.W_Q), heads)
    K = _split_heads(core.matmul(X, params.W_K), heads)
    V = _split_heads(core.matmul(X, params.W_V), heads)
    scores = core.matmul(Q, core.swapaxes(K, -1, -2))  # (B, h, T, T)
    if scaled:
        scores = scores * (1.0 / np.sqrt(d // heads))
    A = core.softmax(scores, axis=-1, mask=causal_mask(T) if causal else None)
    ctx = core.matmul(A, V)  # (B, h, T, d_k)
    ctx = core.reshape(core.transpose(ctx, (0, 2, 1, 3)), (B, T, d))
    out = core.matmul(ctx, params.W_O)
    if residual_norm:
        out = core.layer_norm(X + out, params.ln_gain, params.ln_bias)
    return out, A.data


def causal_user_attention(Xhat: Tensor, e_u: Tensor) -> tuple[Tensor, np.ndarray]:
    """Per-position pooling: row ``k`` attends over positions ``1..k`` with ``e_u`` as query.

    ``Xhat`` (B, T, d), ``e_u`` (B, d). Returns (B, T, d) and weights (B, T, T).
    """
    B, T, d = Xhat.shape
    logits = core.tsum(Xhat * core.reshape(e_u, (B, 1, d)), axis=-1)  # (B, T)
    logits = core.reshape(logits, (B, 1, T)) + np.zeros((1, T, 1))  # same scores on every row
    alpha = core.softmax(logits, axis=-1, mask=causal_mask(T))  # broadcasts to (B, T, T)
    return core.matmul(alpha, Xhat), alpha.data


def user_attention(Xhat: Tensor, e_u: Tensor) -> Tensor:
    """Pool the whole sequence into one vector per batch row (B, d)."""
    pooled, _ = causal_user_attention(Xhat, e_u)
    return pooled[:, -1, :]
