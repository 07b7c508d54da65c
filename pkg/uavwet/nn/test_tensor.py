import numpy as np
import pytest

from uavwet.common.errors import NonFiniteError, ShapeError
from uavwet.nn.tensor import Tensor, concat, minimum, numeric_grad, parameter


def _check(build, x0, rtol=1e-6):
    """Compare autodiff and central differences for a scalar-valued build(Tensor)."""
    x = parameter(x0)
    build(x).backward()
    num = numeric_grad(lambda v: build(Tensor(v)).item(), x0)
    assert np.allclose(x.grad, num, rtol=rtol, atol=1e-8)


def test_sum_of_squares():
    x = parameter([1.0, 2.0])
    (x * x).sum().backward()
    assert x.grad.tolist() == [2.0, 4.0]


def test_elementwise_ops_match_finite_differences():
    rng = np.random.default_rng(0)
    x0 = rng.uniform(0.5, 1.5, (3, 4))
    _check(lambda x: (x.tanh() * x.exp()).sum(), x0)
    _check(lambda x: (x.log() - x.relu() / 3.0).mean(), x0)
    _check(lambda x: ((x - 2.0) ** 2).sum() * 0.5, x0)
    _check(lambda x: (1.0 / x).sum(), x0)


def test_matmul_and_broadcast_bias():
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=(4, 2))
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(2,))
    _check(lambda w: (Tensor(a) @ w + Tensor(b)).tanh().sum(), w0)
    _check(lambda bb: (Tensor(a) @ Tensor(w0) + bb).tanh().sum(), b)


def test_batched_matmul_transpose():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(3, 2, 4))
    _check(lambda x: (x @ x.T).sum(), x0)


def test_softmax_rows_and_gradient():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(4, 5))
    s = Tensor(x0).softmax()
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    weights = rng.normal(size=(4, 5))
    _check(lambda x: (x.softmax() * Tensor(weights)).sum(), x0)


def test_reductions_slices_concat_minimum():
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(3, 6))
    _check(lambda x: x.mean(axis=0).tanh().sum(), x0)
    _check(lambda x: x.sum(axis=-1, keepdims=True).exp().sum(), x0 * 0.1)
    _check(lambda x: (x[:, :2] * x[:, 3:5]).sum(), x0)
    _check(lambda x: concat([x, x * 2.0], axis=-1).tanh().sum(), x0)
    _check(lambda x: minimum(x, x[:, ::-1] + 0.5).sum(), x0)
    _check(lambda x: x.reshape(-1).tanh().sum(), x0)


def test_random_three_layer_mlp_gradients():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(7, 3))
    shapes = [(3, 6), (6,), (6, 6), (6,), (6, 1), (1,)]
    params = [rng.normal(scale=0.5, size=s) for s in shapes]

    def forward(ps):
        h = Tensor(x)
        for j in range(0, 6, 2):
            h = h @ ps[j] + ps[j + 1]
            if j < 4:
                h = h.relu()
        return (h * h).mean()

    tensors = [parameter(p) for p in params]
    forward(tensors).backward()
    for j, p in enumerate(params):
        def f(v, j=j):
            ps = [Tensor(q) for q in params]
            ps[j] = Tensor(v)
            return forward(ps).item()
        num = numeric_grad(f, p, eps=1e-5)
        assert np.allclose(tensors[j].grad, num, rtol=1e-4, atol=1e-7)


def test_shared_subexpression_accumulates():
    x = parameter([3.0])
    y = x * x
    (y + y * 2.0).sum().backward()
    assert x.grad.tolist() == [18.0]


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)).reshape(2, 2)


def test_non_finite_values_raise():
    with pytest.raises(NonFiniteError):
        Tensor([0.0, 1.0]).log()
    with pytest.raises(NonFiniteError):
        Tensor([1000.0]).exp()
    with pytest.raises(NonFiniteError):
        Tensor([1.0]) / Tensor([0.0])


def test_detach_cuts_the_graph():
    x = parameter([2.0])
    (x.detach() * x).sum().backward()
    assert x.grad.tolist() == [2.0]
