from .tensor import (
    LAYER_NORM_EPS,
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    dropout,
    exp,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    power,
    reshape,
    set_debug,
    sigmoid,
    softmax,
    softmax_rows,
    stack,
    sub,
    swapaxes,
    take,
    tanh,
    transpose,
    tsum,
)
from .optim import AdamState, adam_step, clip_global_norm, global_norm, orthogonal_init


def backward(tape: Tape, loss: Tensor):
    """Run reverse-mode differentiation of ``loss`` over ``tape``."""
    return tape.backward(loss)
