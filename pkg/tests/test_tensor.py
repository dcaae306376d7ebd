"""Tensor core: creation, elementwise ops, matmul, and backward."""

import numpy as np
import pytest

import spoofsmith.tensor as T
from spoofsmith import rng as srng
from spoofsmith.errors import InvalidArgumentError, ShapeError
from spoofsmith.gradcheck import finite_difference_grad, grad_error
from spoofsmith.tensor import Tensor


# -- creation -------------------------------------------------------------

def test_full_zero():
    t = T.full((2, 2), 0.0)
    assert t.shape == (2, 2)
    assert np.all(t.data == 0.0)


def test_full_ones():
    assert np.array_equal(T.full((3,), 1.0).data, [1.0, 1.0, 1.0])


@pytest.mark.parametrize("shape", [(0,), (2, 0), (-1, 3)])
def test_bad_shape_rejected(shape):
    with pytest.raises(ShapeError):
        T.zeros(shape)


def test_normal_is_deterministic_given_seed():
    a = T.normal((4, 4), 0.0, 0.02, seed=7)
    b = T.normal((4, 4), 0.0, 0.02, seed=7)
    assert np.array_equal(a.data, b.data)
    c = T.normal((4, 4), 0.0, 0.02, seed=8)
    assert not np.array_equal(a.data, c.data)


def test_uniform_deterministic_and_in_range():
    a = T.uniform((100,), -2.0, 3.0, seed=1)
    b = T.uniform((100,), -2.0, 3.0, seed=1)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() >= -2.0 and a.data.max() <= 3.0


def test_requires_grad_defaults_false():
    assert T.zeros((2,)).requires_grad is False


# -- elementwise ----------------------------------------------------------

def test_sigmoid_at_zero():
    assert T.sigmoid(Tensor(np.zeros(3))).data == pytest.approx([0.5] * 3)


def test_tanh_and_relu_fixed_points():
    assert T.tanh(Tensor([0.0])).data == pytest.approx([0.0])
    assert T.relu(Tensor([-3.0])).data == pytest.approx([0.0])


def test_leaky_relu_definition():
    out = T.leaky_relu(Tensor([-2.0]), alpha=0.2)
    assert out.data == pytest.approx([-0.4])


def test_binary_op_shape_mismatch():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_scalar_broadcast_allowed():
    out = T.mul(Tensor(np.ones((2, 2))), 3.0)
    assert np.all(out.data == 3.0)


# -- matmul ---------------------------------------------------------------

def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    out = T.matmul(Tensor(np.eye(2, dtype=np.float32)), Tensor(a))
    assert np.array_equal(out.data, a)


def test_matmul_hand_case():
    out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert np.array_equal(out.data, [[17.0], [39.0]])


def test_matmul_matches_triple_loop_exactly():
    gen = srng.stream(11, "matmul")
    a = gen.standard_normal((8, 8)).astype(np.float32)
    b = gen.standard_normal((8, 8)).astype(np.float32)
    ref = np.zeros((8, 8), dtype=np.float32)
    for i in range(8):
        for j in range(8):
            acc = 0.0
            for k in range(8):
                acc += float(a[i, k]) * float(b[k, j])
            ref[i, j] = acc
    got = T.matmul(Tensor(a), Tensor(b)).data
    assert np.array_equal(got, ref)


def test_matmul_dim_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


# -- backward -------------------------------------------------------------

def test_backward_square_gradient():
    x = Tensor(np.array([3.0]), requires_grad=True, name="x")
    T.backward(T.tsum(T.mul(x, x)))
    assert x.grad == pytest.approx([6.0])


def test_backward_constant_graph_empty_map():
    c = Tensor(np.array([1.0, 2.0]))
    grads = T.backward(T.tsum(c))
    assert grads == {}


def test_backward_rejects_non_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        T.backward(T.mul(x, x))


def test_backward_accumulates_over_reuse():
    x = Tensor(np.array([1.5]), requires_grad=True, name="x")
    T.backward(T.tsum(T.add(x, x)))
    assert x.grad == pytest.approx([2.0])


def test_backward_sigmoid_matmul_matches_finite_difference():
    gen = srng.stream(12, "fd")
    w0 = gen.uniform(-1, 1, size=(3, 4))
    x0 = gen.uniform(-1, 1, size=(4, 2))

    w = Tensor(w0, requires_grad=True, name="w")
    loss = T.tsum(T.sigmoid(T.matmul(w, Tensor(x0))))
    T.backward(loss)

    def f(arr):
        with T.no_grad():
            return T.tsum(T.sigmoid(T.matmul(Tensor(arr), Tensor(x0)))).item()

    fd = finite_difference_grad(f, w0)
    assert grad_error(w.grad, fd) < 1e-4


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = T.mul(x, x)
    assert y.requires_grad is False


def test_forward_determinism_bitwise():
    gen = srng.stream(13)
    a = gen.standard_normal((16, 16)).astype(np.float32)
    b = gen.standard_normal((16, 16)).astype(np.float32)
    r1 = T.matmul(Tensor(a), Tensor(b)).data
    r2 = T.matmul(Tensor(a), Tensor(b)).data
    assert np.array_equal(r1, r2)
