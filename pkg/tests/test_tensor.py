import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvae import tensor as T
from ssvae.tensor import GradCheckError, ShapeError, Tensor, apply_primitive, backward, grad_check


def f64(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def test_matmul_by_hand():
    out = apply_primitive("matmul", f64([[1, 2], [3, 4]]), f64([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_exp_of_zero():
    np.testing.assert_array_equal(apply_primitive("exp", f64([0.0])).data, [1.0])


def test_softplus_of_zero_is_log2():
    out = apply_primitive("softplus", f64([0.0])).data
    assert out[0] == pytest.approx(np.log(2.0), abs=1e-15)
    assert float(out[0]) == pytest.approx(0.6931471805599453, rel=1e-15)


def test_softplus_stable_for_large_inputs():
    out = T.softplus(f64([-800.0, 0.0, 800.0])).data
    np.testing.assert_allclose(out, [0.0, np.log(2.0), 800.0])


@pytest.mark.parametrize("op", ["add", "sub", "mul", "matmul"])
def test_shape_mismatch_names_op_and_shapes(op):
    a, b = f64(np.ones((2, 3))), f64(np.ones((4, 5)))
    with pytest.raises(ShapeError) as err:
        apply_primitive(op, a, b)
    msg = str(err.value)
    assert op in msg and "(2, 3)" in msg and "(4, 5)" in msg


def test_concat_rejects_mismatched_shapes():
    with pytest.raises(ShapeError, match="concat"):
        T.concat([f64(np.ones((2, 3))), f64(np.ones((2, 4)))], axis=0)


def test_unknown_primitive():
    with pytest.raises(KeyError, match="conv"):
        apply_primitive("conv", f64([1.0]))


def test_backward_sum_of_squares():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    backward(T.sum_(T.square(x)))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_backward_constant_loss_gives_zero_grad():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = T.add(T.mul(T.sum_(x), 0.0), 5.0)
    backward(loss)
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError, match="scalar"):
        backward(T.square(x))


def test_reused_tensor_accumulates():
    # f(x) = x*x + x, f'(x) = 2x + 1
    x = Tensor(np.array([0.5, -2.0, 3.0]), requires_grad=True)
    backward(T.sum_(T.add(T.mul(x, x), x)))
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = T.exp(x)
    assert not y.requires_grad and y._parents == ()


def test_grad_check_sum_is_exact():
    assert grad_check(lambda x: T.sum_(x), np.array([0.3, -1.0, 7.0])) < 1e-9


def test_grad_check_square_at_1_2():
    assert grad_check(lambda x: T.sum_(T.square(x)), np.array([1.0, 2.0])) < 1e-6


def test_grad_check_reports_non_finite_coordinate():
    # log of a coordinate that sits exactly at 0 + step goes to -inf at 0 - step
    with pytest.raises(GradCheckError) as err, np.errstate(divide="ignore"):
        grad_check(lambda x: T.sum_(T.log(x)), np.array([1.0, 1e-4]), step=1e-4)
    assert err.value.index == 1


UNARY = {
    "exp": lambda x: T.exp(x),
    "log": lambda x: T.log(T.add(T.square(x), 0.5)),
    "tanh": lambda x: T.tanh(x),
    "sigmoid": lambda x: T.sigmoid(x),
    "softplus": lambda x: T.softplus(x),
    "square": lambda x: T.square(x),
    "power": lambda x: T.power(T.add(T.square(x), 1.0), -0.5),
    "neg": lambda x: T.neg(x),
    "sum_axis": lambda x: T.square(T.sum_(x, axis=0)),
    "mean_axis": lambda x: T.square(T.mean(x, axis=1, keepdims=True)),
    "slice": lambda x: T.square(x[1:, ::2]),
    "fancy_slice": lambda x: T.square(x[[0, 0, 2]]),
    "reshape": lambda x: T.square(T.reshape(x, (2, 6))),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitive_gradients(name):
    rng = np.random.default_rng(sorted(UNARY).index(name))
    fn = UNARY[name]
    for _ in range(10):
        point = rng.standard_normal((3, 4))
        # random output weights so every output coordinate contributes differently
        weights = f64(rng.standard_normal(fn(f64(point)).shape))
        assert grad_check(lambda x: T.sum_(T.mul(fn(x), weights)), point) < 1e-4


BINARY = {
    "add": lambda a, b: T.add(a, b),
    "sub": lambda a, b: T.sub(a, b),
    "mul": lambda a, b: T.mul(a, b),
    "div": lambda a, b: T.div(a, T.add(T.square(b), 1.0)),
    "matmul": lambda a, b: T.matmul(a, T.reshape(b, (4, 3))),
    "concat": lambda a, b: T.square(T.concat([a, b], axis=1)),
    "broadcast_add": lambda a, b: T.mul(a, b[:1]),
}


@pytest.mark.parametrize("name", sorted(BINARY))
@pytest.mark.parametrize("wrt", [0, 1])
def test_binary_primitive_gradients(name, wrt):
    rng = np.random.default_rng(len(name) * 7 + wrt)
    fn = BINARY[name]
    for _ in range(10):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        if wrt == 0:
            err = grad_check(lambda x: T.sum_(T.tanh(fn(x, f64(b)))), a)
        else:
            err = grad_check(lambda x: T.sum_(T.tanh(fn(f64(a), x))), b)
        assert err < 1e-4, name


def test_composed_mlp_gradient():
    from ssvae.nn import MLP

    rng = np.random.default_rng(0)
    net = MLP((5, 7, 3), rng, np.float64)
    obs = f64(rng.standard_normal((4, 5)))
    w = net.layers[0].weight

    def fn(x):
        w.data = x.data
        net.layers[0].weight = x
        return T.sum_(T.square(net(obs)))

    assert grad_check(fn, w.data.copy()) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.sampled_from(["exp", "tanh", "softplus", "square", "sigmoid"]))
def test_primitives_do_not_modify_inputs(values, op):
    arr = np.array(values)
    x = Tensor(arr.copy(), requires_grad=True)
    backward(T.sum_(apply_primitive(op, x)))
    np.testing.assert_array_equal(x.data, arr)


def test_float32_dtype_is_preserved():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = T.mul(T.exp(x), 2.0)
    assert y.dtype == np.float32
    backward(T.sum_(y))
    assert x.grad.dtype == np.float32
