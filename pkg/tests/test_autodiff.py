import numpy as np
import pytest

from flowroute.nn import autodiff as ad
from flowroute.nn.autodiff import Tensor


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def check(fn, *shapes, seed=0, positive=False, tol=1e-6):
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(0.5, 2.0, s) if positive else rng.standard_normal(s) for s in shapes]
    weights = None
    for k in range(len(arrays)):
        ts = [Tensor(a, requires_grad=True) for a in arrays]
        out = fn(*ts)
        if weights is None:
            weights = rng.standard_normal(out.shape)
        (out * weights).sum().backward()

        def scalar(x, k=k):
            args = [Tensor(a) for a in arrays]
            args[k] = Tensor(x)
            return float((fn(*args).data * weights).sum())

        ng = numeric_grad(scalar, arrays[k])
        err = np.max(np.abs(ts[k].grad - ng)) / max(np.abs(ng).max(), 1e-8)
        assert err < tol, (k, err)


def test_product_rule_scalar():
    x, y = Tensor(3.0, requires_grad=True), Tensor(4.0, requires_grad=True)
    (x * y).backward()
    assert x.grad == 4.0 and y.grad == 3.0


def test_cross_entropy_uniform_logits():
    z = Tensor(np.zeros(2), requires_grad=True)
    ad.cross_entropy(z, 0).backward()
    np.testing.assert_allclose(z.grad, [-0.5, 0.5], atol=1e-15)
    z = Tensor(np.zeros(2), requires_grad=True)
    ad.cross_entropy(z, 1).backward()
    np.testing.assert_allclose(z.grad, [0.5, -0.5], atol=1e-15)


@pytest.mark.parametrize(
    "fn,shapes,positive",
    [
        (lambda a, b: a + b, [(3, 4), (4,)], False),
        (lambda a, b: a - b, [(3, 4), (3, 1)], False),
        (lambda a, b: a * b, [(3, 4), (1, 4)], False),
        (lambda a, b: a / b, [(3, 4), (3, 4)], True),
        (lambda a, b: a @ b, [(3, 4), (4, 2)], False),
        (lambda a: a.T, [(3, 4)], False),
        (lambda a: a.reshape((6, 2)), [(3, 4)], False),
        (lambda a: a[np.array([0, 2, 2])], [(3, 4)], False),
        (lambda a: ad.concat([a, a * 2.0], axis=1), [(3, 2)], False),
        (lambda a: a.sum(axis=0), [(3, 4)], False),
        (lambda a: a.mean(axis=1, keepdims=True), [(3, 4)], False),
        (lambda a: ad.reduce_max(a, axis=1), [(3, 4)], False),
        (lambda a: ad.reduce_min(a), [(3, 4)], False),
        (ad.exp, [(3, 4)], False),
        (ad.log, [(3, 4)], True),
        (ad.sigmoid, [(3, 4)], False),
        (ad.gelu, [(3, 4)], False),
        (ad.silu, [(3, 4)], False),
        (lambda a: ad.softmax(a, axis=-1), [(3, 4)], False),
        (lambda a: ad.log_softmax(a, axis=-1), [(3, 4)], False),
        (lambda a, g, b: ad.layer_norm(a, g, b), [(3, 5), (5,), (5,)], False),
        (lambda a: ad.scatter(a, (np.array([0, 1, 1]), np.array([2, 0, 0])), (2, 3)), [(3,)], False),
    ],
)
def test_primitive_gradients(fn, shapes, positive):
    check(fn, *shapes, positive=positive)


def test_relu_and_clip_away_from_kinks():
    x = Tensor(np.array([-2.0, -0.5, 0.5, 2.0]), requires_grad=True)
    (ad.relu(x) * 3.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [0, 0, 3, 3])
    x = Tensor(np.array([-40.0, 0.0, 40.0]), requires_grad=True)
    ad.clip(x, -30, 30).sum().backward()
    np.testing.assert_array_equal(x.grad, [0, 1, 0])


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x
    (y + y * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 3 * x.data**2)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    y.backward()
    assert x.grad is None


def test_foreign_ufunc_refused():
    with pytest.raises(TypeError):
        np.sin(Tensor(np.ones(2)))


def test_matmul_needs_matrices():
    with pytest.raises(ValueError):
        ad.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_deep_chain_has_no_recursion_limit():
    x = Tensor(np.array(1.0), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0001
    y.backward()
    assert np.isclose(x.grad, 1.0001**5000)
