import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmatch import core
from seqmatch.core import (
    AdamState,
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    adam_step,
    clip_global_norm,
    global_norm,
    orthogonal_init,
)
from seqmatch.core.gradcheck import check_gradients


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(core.matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_unit_row():
    out = core.matmul(Tensor([[1.0, 0.0]]), Tensor([[0.5], [2.0]]))
    np.testing.assert_array_equal(out.data, [[0.5]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(core.matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-14)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        core.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


# -- softmax ------------------------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(core.softmax_rows(Tensor([[0.0, 0, 0, 0]])).data, [[0.25] * 4], atol=1e-15)
    np.testing.assert_allclose(core.softmax_rows(Tensor([[0.0, math.log(3)]])).data, [[0.25, 0.75]], atol=1e-15)
    e = math.e
    out = core.softmax_rows(Tensor([[1000.0, 1001.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1 / (1 + e), e / (1 + e)]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 5),
    st.integers(1, 7),
    st.integers(0, 2**31 - 1),
    st.floats(-1e3, 1e3, allow_nan=False),
)
def test_softmax_rows_sum_to_one_and_shift_invariant(m, n, seed, shift):
    x = np.random.default_rng(seed).normal(scale=5.0, size=(m, n))
    y = core.softmax_rows(Tensor(x)).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    y_shift = core.softmax_rows(Tensor(x + shift)).data
    np.testing.assert_allclose(y, y_shift, atol=1e-12)


def test_softmax_is_monotone_in_its_input():
    x = np.array([[0.3, -1.0, 2.0]])
    y0 = core.softmax_rows(Tensor(x)).data
    x[0, 1] += 0.5
    y1 = core.softmax_rows(Tensor(x)).data
    assert y1[0, 1] > y0[0, 1]


def test_masked_softmax_zero_weight_and_empty_rows():
    x = Tensor([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    mask = np.array([[True, True, False], [False, False, False]])
    y = core.softmax(x, mask=mask).data
    assert y[0, 2] == 0.0
    np.testing.assert_allclose(y[0, :2].sum(), 1.0, atol=1e-15)
    np.testing.assert_array_equal(y[1], 0.0)


# -- layer norm ---------------------------------------------------------------


def test_layer_norm_constant_vector():
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    out = core.layer_norm(Tensor([5.0, 5, 5, 5]), ones, zeros)
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_already_standardised():
    out = core.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-6)


def test_layer_norm_moments():
    x = np.random.default_rng(3).normal(loc=2.0, scale=3.0, size=32)
    out = core.layer_norm(Tensor(x), Tensor(np.ones(32)), Tensor(np.zeros(32))).data
    # direct recomputation of the pre-affine moments
    assert abs(out.mean()) < 1e-9
    assert abs(out.var() - 1.0) < 1e-6


def test_layer_norm_affine():
    x = np.array([1.0, 2.0, 4.0])
    gain, bias = np.array([2.0, 0.5, -1.0]), np.array([0.1, 0.2, 0.3])
    xhat = (x - x.mean()) / np.sqrt(x.var() + core.LAYER_NORM_EPS)
    out = core.layer_norm(Tensor(x), Tensor(gain), Tensor(bias)).data
    np.testing.assert_allclose(out, gain * xhat + bias, atol=1e-14)


# -- backward -----------------------------------------------------------------


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        loss = x * x
    core.backward(tape, loss)
    assert x.grad == pytest.approx(6.0)


def test_backward_sigmoid_at_zero():
    x = Tensor(np.zeros(5), requires_grad=True)
    with Tape() as tape:
        loss = core.sigmoid(x).sum()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 0.25)


def test_backward_fan_out_accumulates():
    x = Tensor(2.0, requires_grad=True)
    with Tape() as tape:
        y = x * 3.0
        loss = y * y + y  # 9x^2 + 3x
    tape.backward(loss)
    assert x.grad == pytest.approx(18 * 2 + 3)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(TapeError):
        tape.backward(y)


def test_backward_twice_is_an_error():
    x = Tensor(1.0, requires_grad=True)
    with Tape() as tape:
        loss = x * x
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_no_recording_outside_tape():
    x = Tensor(1.0, requires_grad=True)
    y = x * x
    assert not y.requires_grad


def test_debug_mode_detects_nan():
    core.set_debug(True)
    try:
        with pytest.raises(NonFiniteError):
            core.log(Tensor([-1.0]))
    finally:
        core.set_debug(False)


OPS = {
    "add_broadcast": lambda a, b: (a + b[0]).sum(),
    "sub": lambda a, b: (a - b * 2.0).sum(),
    "mul_div": lambda a, b: (a * b / (b * b + 1.0)).sum(),
    "matmul": lambda a, b: core.tanh(a @ core.transpose(b)).sum(),
    "exp_log": lambda a, b: core.log(core.exp(a) + core.exp(b)).sum(),
    "power": lambda a, b: ((a * a + 1.0) ** 1.5).sum(),
    "sigmoid": lambda a, b: (core.sigmoid(a) * b).sum(),
    "softmax": lambda a, b: (core.softmax(a, axis=-1) * b).sum(),
    "masked_softmax": lambda a, b: (core.softmax(a, mask=np.array([True, False, True, True])) * b).sum(),
    "log_softmax": lambda a, b: (core.log_softmax(a, axis=0) * b).sum(),
    "layer_norm": lambda a, b: (core.layer_norm(a, b[0], b[1]) * a).sum(),
    "mean_reshape": lambda a, b: core.mean(core.reshape(a * b, (4, 3)) ** 2.0, axis=0).sum(),
    "getitem_take": lambda a, b: (a[:, ::2] * core.take(b, [0, 0, 2], axis=0)[:, :2]).sum(),
    "take_axis1": lambda a, b: (core.take(a, [[3, 1], [1, 1]], axis=1) ** 2.0).sum(),
    "concat_stack": lambda a, b: (core.concat([a, b], axis=0) * core.stack([a, b], 0).sum(axis=0)[0]).sum(),
    "swapaxes": lambda a, b: (core.swapaxes(a, 0, 1) @ b).sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("point", range(10))
def test_op_gradients_match_finite_differences(name, point):
    rng = np.random.default_rng(1000 + point)
    a, b = param(rng, 3, 4), param(rng, 3, 4)
    if name == "swapaxes":
        b = param(rng, 3, 2)
    errors = check_gradients(lambda: OPS[name](a, b), [("a", a), ("b", b)])
    assert max(errors.values()) <= 1e-5, errors


def test_dropout_gradient_uses_same_mask():
    rng = np.random.default_rng(5)
    a = param(rng, 6, 6)
    errors = check_gradients(lambda: (core.dropout(a, 0.3, True, seed=7) ** 2.0).sum(), [("a", a)])
    assert errors["a"] <= 1e-5


# -- Adam ---------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Tensor([1.0, -2.0], requires_grad=True)
    before = p.data.copy()
    adam_step(AdamState(), {"p": p}, {"p": np.zeros(2)})
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_magnitude_is_lr():
    p = Tensor([1.0, -2.0, 0.5], requires_grad=True)
    before = p.data.copy()
    g = np.array([3.0, -40.0, 1e-2])
    adam_step(AdamState(lr=0.001), {"p": p}, {"p": g})
    np.testing.assert_allclose(before - p.data, 0.001 * np.sign(g), rtol=1e-5)


def test_adam_two_steps_decrease_quadratic():
    x = Tensor([1.0], requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(2):
        with Tape() as tape:
            loss = (x * x).sum()
        tape.backward(loss)
        adam_step(state, {"x": x}, {"x": x.grad})
    assert x.data[0] ** 2 < 1.0
    assert state.t == 2


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(AdamState(), {"p": Tensor(np.zeros(2))}, {"p": np.zeros(3)})


# -- clipping -----------------------------------------------------------------


def test_clip_halves_norm_ten():
    grads = {"a": np.array([6.0, 0.0]), "b": np.array([[0.0, 8.0]])}
    clipped = clip_global_norm(grads, 5.0)
    np.testing.assert_allclose(clipped["a"], [3.0, 0.0])
    np.testing.assert_allclose(clipped["b"], [[0.0, 4.0]])


def test_clip_below_threshold_unchanged():
    grads = {"a": np.array([3.0, 0.0])}
    np.testing.assert_array_equal(clip_global_norm(grads, 5.0)["a"], [3.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_clip_bounds_norm_and_is_idempotent(seed, threshold):
    rng = np.random.default_rng(seed)
    grads = {"a": rng.normal(scale=4.0, size=(3, 3)), "b": rng.normal(size=5), "c": None}
    once = clip_global_norm(grads, threshold)
    assert global_norm(once) <= threshold + 1e-12
    twice = clip_global_norm(once, threshold)
    for k in ("a", "b"):
        np.testing.assert_array_equal(once[k], twice[k])


# -- initialisation and dropout ----------------------------------------------


def test_orthogonal_scalar():
    assert abs(orthogonal_init(1, 1, seed=0).data[0, 0]) == pytest.approx(1.0)


@pytest.mark.parametrize("shape", [(4, 4), (7, 3), (3, 7)])
def test_orthogonal_columns(shape):
    q = orthogonal_init(*shape, seed=11).data
    if shape[0] >= shape[1]:
        np.testing.assert_allclose(q.T @ q, np.eye(shape[1]), atol=1e-8)
    else:
        np.testing.assert_allclose(q @ q.T, np.eye(shape[0]), atol=1e-8)


def test_orthogonal_deterministic():
    np.testing.assert_array_equal(orthogonal_init(5, 3, seed=2).data, orthogonal_init(5, 3, seed=2).data)


def test_dropout_identity_cases():
    x = Tensor(np.arange(6.0))
    assert core.dropout(x, 0.0, True, seed=1) is x
    assert core.dropout(x, 0.5, False, seed=1) is x


def test_dropout_statistics():
    x = Tensor(np.ones(100_000))
    y = core.dropout(x, 0.2, True, seed=123).data
    assert abs(np.mean(y == 0.0) - 0.2) < 0.02
    assert abs(y.mean() - 1.0) < 0.02


def test_dropout_reproducible():
    x = Tensor(np.ones(50))
    np.testing.assert_array_equal(core.dropout(x, 0.4, True, seed=9).data, core.dropout(x, 0.4, True, seed=9).data)


def test_numerical_grad_on_non_contiguous_param():
    from seqmatch.core.gradcheck import numerical_grad

    w = Tensor(np.arange(6.0).reshape(2, 3).T)  # a transposed view
    assert not w.data.flags.c_contiguous
    grad = numerical_grad(lambda: float((w.data**2).sum()), w)
    np.testing.assert_allclose(grad, 2 * w.data, rtol=0, atol=1e-6)
