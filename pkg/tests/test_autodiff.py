import numpy as np
import pytest

from corrstn import Module, Parameter, Tensor, xavier_uniform
from corrstn.autodiff import (abs_, add, concat, dropout, layer_norm, linear,
                              matmul, mean, mul, mul_scalar, narrow, pad_axis,
                              permute, relu, reshape, softmax, sub, sum_)
from corrstn.errors import ConfigError, DimensionError
from oracles import finite_difference_gradient, gradient_gap


def _check_op(build, *shapes, seed=0, tol=1e-6, offset=0.0):
    """FD-check d(sum of op output)/d(input) for every input slot."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) + offset for s in shapes]
    for slot in range(len(arrays)):
        tensors = [Tensor(a.copy(), requires_grad=(k == slot))
                   for k, a in enumerate(arrays)]
        out = build(*tensors)
        out.backward(np.ones_like(out.data))
        analytic = tensors[slot].grad

        def scalar(a, slot=slot):
            probe = [Tensor(x.copy()) for x in arrays]
            probe[slot] = Tensor(a)
            return float(np.sum(build(*probe).data))

        numeric = finite_difference_gradient(scalar, arrays[slot])
        gap = gradient_gap(analytic, numeric)
        assert gap < tol, f"slot {slot}: {gap}"


def test_arithmetic_gradients():
    _check_op(add, (3, 4), (3, 4))
    _check_op(sub, (3, 4), (3, 4))
    _check_op(mul, (3, 4), (3, 4))
    _check_op(lambda a: mul_scalar(a, -2.5), (3, 4))


def test_broadcast_gradients():
    _check_op(add, (2, 3, 4), (4,))
    _check_op(mul, (2, 3, 4), (1, 3, 1))
    _check_op(sub, (5, 1), (1, 5))


def test_matmul_gradients():
    _check_op(matmul, (3, 4), (4, 5))
    _check_op(matmul, (2, 3, 4), (4, 5))        # broadcast rhs
    _check_op(matmul, (2, 1, 3, 4), (2, 6, 4, 5))  # batched broadcast
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_linear_gradients():
    _check_op(lambda x, w, b: linear(x, w, b), (4, 3), (3, 2), (2,))
    _check_op(lambda x, w: linear(x, w), (4, 3), (3, 2))


def test_relu_and_abs_gradients():
    # keep inputs away from the kink at zero
    _check_op(relu, (4, 4), offset=0.7)
    _check_op(lambda a: relu(mul_scalar(a, -1.0)), (4, 4), offset=0.7)
    _check_op(abs_, (4, 4), offset=0.8)
    _check_op(lambda a: abs_(mul_scalar(a, -1.0)), (4, 4), offset=0.8)


def test_abs_subgradient_zero_at_zero():
    t = Tensor(np.zeros(3), requires_grad=True)
    abs_(t).backward(np.ones(3))
    assert np.array_equal(t.grad, np.zeros(3))


def test_reduction_gradients():
    _check_op(lambda a: sum_(a), (3, 4))
    _check_op(lambda a: sum_(a, axis=1), (3, 4))
    _check_op(lambda a: sum_(a, axis=(0, 2), keepdims=True), (2, 3, 4))
    _check_op(lambda a: mean(a), (3, 4))
    _check_op(lambda a: mean(a, axis=0), (3, 4))


def test_sum_and_mean_values():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 5))
    assert np.allclose(sum_(Tensor(a)).data, a.sum(), atol=1e-15)
    assert np.allclose(mean(Tensor(a), axis=1).data, a.mean(axis=1), atol=1e-15)
    t = Tensor(a, requires_grad=True)
    mean(t).backward()
    assert np.allclose(t.grad, np.full((3, 5), 1.0 / 15), atol=1e-18)


def test_shape_op_gradients():
    _check_op(lambda a: reshape(a, (6, 2)), (3, 4))
    _check_op(lambda a: permute(a, (2, 0, 1)), (2, 3, 4))
    _check_op(lambda a: narrow(a, 1, 1, 2), (3, 4))
    _check_op(lambda a: pad_axis(a, 0, 2, 1), (3, 4))
    _check_op(lambda a, b: concat([a, b], axis=1), (3, 2), (3, 4))


def test_narrow_and_concat_are_inverses():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(3, 2)))
    b = Tensor(rng.normal(size=(3, 4)))
    joined = concat([a, b], axis=1)
    assert np.array_equal(narrow(joined, 1, 0, 2).data, a.data)
    assert np.array_equal(narrow(joined, 1, 2, 4).data, b.data)


def test_softmax_values_and_gradients():
    _check_op(lambda a: softmax(a), (4, 5))
    rng = np.random.default_rng(3)
    s = softmax(Tensor(rng.normal(size=(6, 7)) * 30))  # large logits stay stable
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s.data >= 0)


def test_softmax_mask_zeroes_entries():
    rng = np.random.default_rng(4)
    scores = rng.normal(size=(2, 3, 3))
    mask = np.triu(np.ones((3, 3), dtype=bool), k=1)
    s = softmax(Tensor(scores), mask=mask)
    assert np.all(s.data[..., mask] == 0.0)
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    with pytest.raises(ConfigError):
        softmax(Tensor(scores), mask=np.ones((3, 3), dtype=bool))


def test_masked_softmax_gradients():
    mask = np.triu(np.ones((4, 4), dtype=bool), k=1)
    _check_op(lambda a: softmax(a, mask=mask), (2, 4, 4))


def test_layer_norm_values_and_gradients():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 6)) * 4 + 2
    out = layer_norm(Tensor(x), Tensor(np.ones(6)), Tensor(np.zeros(6)))
    assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(out.data.std(axis=-1), 1.0, atol=1e-3)  # eps shrinks it
    _check_op(lambda a, g, b: layer_norm(a, g, b), (3, 6), (6,), (6,))


def test_dropout_inverted_scaling():
    rng = np.random.default_rng(6)
    x = Tensor(np.ones((1000,)), requires_grad=True)
    out = dropout(x, 0.25, rng)
    kept = out.data != 0
    assert np.allclose(out.data[kept], 1.0 / 0.75, atol=1e-12)
    assert abs(kept.mean() - 0.75) < 0.05
    out.backward(np.ones(1000))
    assert np.array_equal(x.grad != 0, kept)
    assert np.array_equal(dropout(x, 0.0, rng).data, x.data)


def test_diamond_graph_accumulates():
    # y = a*a + a  ->  dy/da = 2a + 1
    a = Tensor(np.array([3.0]), requires_grad=True)
    y = mul(a, a) + a
    y.backward()
    assert np.allclose(a.grad, [7.0], atol=1e-15)


def test_deep_chain_avoids_recursion_limit():
    t = Tensor(np.array([1.0]), requires_grad=True)
    out = t
    for _ in range(5000):
        out = out + 0.0
    out.backward()
    assert np.allclose(t.grad, [1.0], atol=0)


def test_backward_seed_rules():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(DimensionError):
        sum_(t, axis=0).backward()        # non-scalar needs a seed
    with pytest.raises(DimensionError):
        sum_(t).backward(np.ones(3))      # wrong seed shape


def test_detach_blocks_gradient():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = mul(a, a).detach()
    c = mul(b, b)
    c.backward()
    assert a.grad is None


def test_module_parameter_walk():
    class Block(Module):
        def __init__(self):
            self.w = Parameter(np.zeros((2, 2)), name="w")

    class Net(Module):
        def __init__(self):
            self.emb = Parameter(np.zeros(3), name="emb")
            self.blocks = [Block(), Block()]

    net = Net()
    names = [n for n, _ in net.named_parameters()]
    assert names == ["emb", "blocks.0.w", "blocks.1.w"]
    for p in net.parameters():
        p.grad = np.ones_like(p.data)
    net.zero_grad()
    assert all(p.grad is None for p in net.parameters())


def test_xavier_uniform_bounds():
    rng = np.random.default_rng(7)
    w = xavier_uniform(rng, (50, 80), fan_in=50, fan_out=80)
    bound = np.sqrt(6.0 / 130.0)
    assert w.shape == (50, 80)
    assert w.min() >= -bound and w.max() <= bound
    assert w.std() > bound / 4  # actually spread out, not collapsed
