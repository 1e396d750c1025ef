"""Tape-recorded primitives checked against central finite differences."""

import numpy as np
import pytest

from locgclstm import autodiff as ad
from locgclstm.autodiff import GradientTape, ParameterSet, Tensor, backward
from locgclstm.errors import ContractError, ShapeMismatchError
from locgclstm.gradcheck import finite_difference_gradient, max_relative_error

RNG = np.random.default_rng(20240501)


def test_sigmoid_tanh_at_zero():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5
    assert ad.tanh(Tensor(0.0)).item() == 0.0


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(a, np.eye(2))
    assert np.array_equal(out.data, a.data)


def test_matmul_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeMismatchError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_add_shape_error():
    with pytest.raises(ShapeMismatchError, match="add"):
        ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_square_gradient_analytic():
    # d(x*x)/dx at x=3 is 6
    x = Tensor(3.0)
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        loss = ad.multiply(x, x)
    backward(loss, tape, params)
    assert params.grad("x") == pytest.approx(6.0, abs=1e-15)


def test_sigmoid_gradient_at_zero():
    x = Tensor(0.0)
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        loss = ad.sigmoid(x)
    backward(loss, tape, params)
    assert params.grad("x") == pytest.approx(0.25, abs=1e-15)


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3))
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        y = ad.multiply(x, x)
    with pytest.raises(ContractError):
        backward(y, tape, params)


def test_unreachable_parameter_gets_zero_gradient():
    x, y = Tensor(2.0), Tensor(5.0)
    params = ParameterSet({"x": x, "y": y})
    with GradientTape() as tape:
        loss = ad.multiply(x, x)
    backward(loss, tape, params)
    assert params.grad("y") == 0.0


def test_fanout_accumulates_additively():
    # z = x*y + x  =>  dz/dx = y + 1
    x, y = Tensor(3.0), Tensor(4.0)
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        loss = ad.add(ad.multiply(x, y), x)
    backward(loss, tape, params)
    assert params.grad("x") == pytest.approx(5.0)


def test_matmul_mse_matches_finite_differences():
    # gradient of a mean-squared loss through a 2x2 matmul, oracle: central FD
    w = Tensor(RNG.uniform(-1, 1, size=(2, 2)))
    x = np.array([[0.3, -0.7], [1.1, 0.4]])
    target = np.array([[0.2, 0.1], [-0.5, 0.9]])
    params = ParameterSet({"w": w})

    def run(p):
        with GradientTape() as tape:
            pred = ad.matmul(Tensor(x), p["w"])
            diff = ad.subtract(pred, target)
            loss = ad.reduce_mean(ad.multiply(diff, diff))
        return loss, tape

    loss, tape = run(params)
    backward(loss, tape, params)
    analytic = {"w": params.grad("w")}
    numeric = finite_difference_gradient(lambda p: run(p)[0].item(), params, h=1e-6)
    assert max_relative_error(analytic, numeric) < 1e-6


@pytest.mark.parametrize("trial", range(8))
def test_primitives_match_finite_differences(trial):
    """Random composite programs over the full primitive set vs central FD."""
    rng = np.random.default_rng(1000 + trial)
    a = Tensor(rng.uniform(-2, 2, size=(3, 4)))
    b = Tensor(rng.uniform(-2, 2, size=(4, 2)))
    c = Tensor(rng.uniform(-2, 2, size=(3, 2)))
    d = Tensor(rng.uniform(0.5, 2.0, size=(3, 1)))  # divisor kept away from 0
    bias = Tensor(rng.uniform(-1, 1, size=2))
    # keep |entries| away from 0 so the abs kink cannot sit inside the FD stencil
    c.data[np.abs(c.data) < 1e-3] = 1e-3
    params = ParameterSet({"a": a, "b": b, "c": c, "d": d, "bias": bias})

    def program(p):
        with GradientTape() as tape:
            t = ad.matmul(p["a"], p["b"])            # (3, 2)
            t = ad.add(t, p["bias"])                 # broadcast bias add
            t = ad.sigmoid(t)
            u = ad.tanh(p["c"])
            v = ad.divide(ad.multiply(t, u), p["d"])  # broadcast divide
            w = ad.concat([v, ad.absolute(p["c"])], axis=1)
            loss = ad.add(
                ad.reduce_mean(w), ad.reduce_sum(ad.multiply(v, v), axis=None)
            )
        return loss, tape

    loss, tape = program(params)
    backward(loss, tape, params)
    analytic = {name: params.grad(name) for name in params.names()}
    numeric = finite_difference_gradient(lambda p: program(p)[0].item(), params, h=1e-6)
    assert max_relative_error(analytic, numeric) < 1e-5


def test_batched_matmul_gradients():
    # (N,N) support broadcast against a (B,N,F) batch, as the model uses it
    rng = np.random.default_rng(7)
    s = Tensor(rng.uniform(-1, 1, size=(3, 3)))
    x = Tensor(rng.uniform(-1, 1, size=(5, 3, 2)))
    params = ParameterSet({"s": s, "x": x})

    def program(p):
        with GradientTape() as tape:
            out = ad.matmul(p["s"], p["x"])
            loss = ad.reduce_mean(ad.multiply(out, out))
        return loss, tape

    loss, tape = program(params)
    backward(loss, tape, params)
    analytic = {n: params.grad(n) for n in params.names()}
    numeric = finite_difference_gradient(lambda p: program(p)[0].item(), params, h=1e-6)
    assert max_relative_error(analytic, numeric) < 1e-5


def test_vector_matmul_gradients():
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(-1, 1, size=4))
    w = Tensor(rng.uniform(-1, 1, size=(4, 3)))
    params = ParameterSet({"x": x, "w": w})

    def program(p):
        with GradientTape() as tape:
            out = ad.matmul(p["x"], p["w"])
            loss = ad.reduce_sum(ad.multiply(out, out))
        return loss, tape

    loss, tape = program(params)
    backward(loss, tape, params)
    analytic = {n: params.grad(n) for n in params.names()}
    numeric = finite_difference_gradient(lambda p: program(p)[0].item(), params, h=1e-6)
    assert max_relative_error(analytic, numeric) < 1e-6


def test_tape_replay_is_bit_identical():
    rng = np.random.default_rng(3)
    w = Tensor(rng.uniform(-1, 1, size=(4, 4)))
    params = ParameterSet({"w": w})
    with GradientTape() as tape:
        t = ad.tanh(ad.matmul(w, w))
        loss = ad.reduce_mean(ad.multiply(t, t))
    backward(loss, tape, params)
    first = params.grad("w").copy()
    backward(loss, tape, params)
    assert np.array_equal(first, params.grad("w"))


def test_backward_linearity_in_loss_scale():
    rng = np.random.default_rng(5)
    w = Tensor(rng.uniform(-1, 1, size=(3, 3)))
    for scale in (2.0, -0.5, 7.25):
        params = ParameterSet({"w": w})
        with GradientTape() as tape:
            base = ad.reduce_sum(ad.multiply(ad.sigmoid(w), w))
        backward(base, tape, params)
        g1 = params.grad("w").copy()
        with GradientTape() as tape2:
            scaled = ad.multiply(
                Tensor(scale), ad.reduce_sum(ad.multiply(ad.sigmoid(w), w))
            )
        backward(scaled, tape2, params)
        assert np.allclose(params.grad("w"), scale * g1, rtol=0, atol=1e-15)


def test_abs_gradient_and_its_zero_convention():
    x = Tensor([2.0, -3.0, 0.0])
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        loss = ad.reduce_sum(ad.absolute(x))
    backward(loss, tape, params)
    assert np.array_equal(params.grad("x"), [1.0, -1.0, 0.0])


def test_operator_overloads_roundtrip():
    a, b = Tensor([1.0, 2.0]), Tensor([3.0, 4.0])
    with GradientTape():
        out = (a + b) * a - b / 2.0 + (-a)
    expected = (np.array([1, 2]) + [3, 4]) * [1, 2] - np.array([3, 4]) / 2 - [1, 2]
    assert np.allclose(out.data, expected)


def test_no_tape_means_no_recording():
    tape = GradientTape()
    with tape:
        pass
    ad.add(Tensor(1.0), Tensor(2.0))  # executed outside any active tape
    assert len(tape) == 0


def test_values_stay_finite_on_extreme_inputs():
    big = Tensor(np.array([-1e3, -50.0, 0.0, 50.0, 1e3]))
    assert np.all(np.isfinite(ad.sigmoid(big).data))
    assert np.all(np.isfinite(ad.tanh(big).data))


def test_primitive_dispatch_by_name():
    out = ad.primitive_forward("matmul", Tensor([[1.0, 2.0]]), np.eye(2))
    assert np.array_equal(out.data, [[1.0, 2.0]])
    assert ad.primitive_forward("sigmoid", Tensor(0.0)).item() == 0.5
    with pytest.raises(ContractError, match="unknown primitive"):
        ad.primitive_forward("convolve", Tensor(1.0))
