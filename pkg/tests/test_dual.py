import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hkt_ccd import dual as D

finite = st.floats(0.1, 3.0)


def _grad(f, x):
    """Value and gradient of scalar f at x via seeded duals."""
    x = np.asarray(x, dtype=float)
    X = D.Dual(x, np.eye(x.size))
    out = f(X)
    return out.val, out.der


def _fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _expr(x):
    a, b, c = x[0], x[1], x[2]
    return (D.sin(a * b) + D.exp(-c) * D.sqrt(a) - D.log(b) / (1.0 + c * c) + a**2.5
            - D.tan(0.3 * c) + D.arccos(0.2 * a / (1 + a)) + D.absolute(b - c) + 2.0 / b
            - 1.0 - c)


@given(a=finite, b=finite, c=finite)
def test_gradient_matches_finite_differences(a, b, c):
    assume(abs(b - c) > 1e-3)  # |b - c| has a kink
    x = [a, b, c]
    val, der = _grad(_expr, x)
    assert val == pytest.approx(_expr(np.array(x)), rel=1e-14)
    np.testing.assert_allclose(der, _fd(_expr, x), rtol=1e-6, atol=1e-7)


def test_seed_and_constant():
    x = D.Dual.seed(np.array([1.0, 2.0]), 1, 3)
    assert x.shape == (2,) and x.nder == 3 and len(x) == 2
    assert np.array_equal(x.der, [[0, 1, 0], [0, 1, 0]])
    c = D.Dual.constant(5.0, 2)
    assert np.array_equal(c.der, [0.0, 0.0])


def test_broadcasting_with_arrays():
    x = D.Dual.seed(2.0, 0, 1)
    y = x * np.array([1.0, 2.0, 3.0]) + np.array([0.0, 1.0, 2.0])
    assert np.array_equal(y.val, [2, 5, 8])
    assert np.array_equal(y.der[:, 0], [1, 2, 3])


def test_array_on_left_defers_to_dual():
    x = D.Dual.seed(np.array([1.0, 2.0]), 0, 1)
    y = np.array([3.0, 4.0]) * x
    assert isinstance(y, D.Dual)
    z = np.array([1.0, 1.0]) - x
    assert np.array_equal(z.der[:, 0], [-1, -1])


def test_dual_power_and_reverse_division():
    x = D.Dual.seed(2.0, 0, 2)
    y = D.Dual.seed(3.0, 1, 2)
    p = x**y
    assert p.val == pytest.approx(8.0)
    assert p.der == pytest.approx([3 * 4.0, 8.0 * np.log(2.0)])
    q = 1.0 / x
    assert q.der == pytest.approx([-0.25, 0.0])


def test_sum_and_indexing():
    x = D.Dual(np.arange(6.0).reshape(2, 3), np.ones((2, 3, 2)))
    assert x.sum().der == pytest.approx([6.0, 6.0])
    assert x.sum(axis=1).der.shape == (2, 2)
    assert x.sum(axis=-1).val == pytest.approx([3.0, 12.0])
    assert x[1, 2].val == 5.0 and x[1, 2].der.shape == (2,)
    assert x[0].val.shape == (3,)


def test_comparisons_use_values():
    x = D.Dual.seed(np.array([1.0, 3.0]), 0, 1)
    assert np.array_equal(x < 2.0, [True, False])
    assert np.array_equal(x >= D.Dual.constant(np.array([1.0, 4.0]), 1), [True, False])


def test_where_follows_branch():
    x = D.Dual.seed(np.array([-1.0, 2.0]), 0, 1)
    y = D.where(x > 0, x * x, -x)
    assert np.array_equal(y.val, [1.0, 4.0])
    assert np.array_equal(y.der[:, 0], [-1.0, 4.0])
    assert np.array_equal(D.where([True, False], 1.0, 2.0), [1.0, 2.0])


def test_functions_accept_plain_floats():
    assert D.sin(0.5) == np.sin(0.5)
    assert D.value(3.0) == 3.0
    assert D.derivative(3.0, 2).shape == (2,)


def test_hermite_interpolates_cubic_exactly():
    xp = np.linspace(-1.0, 2.0, 7)
    f = lambda x: 2 * x**3 - x**2 + 0.5 * x - 1
    df = lambda x: 6 * x**2 - 2 * x + 0.5
    xs = np.linspace(-1.0, 2.0, 101)
    np.testing.assert_allclose(D.hermite(xs, xp, f(xp), df(xp)), f(xs), atol=1e-12)
    X = D.Dual.seed(xs, 0, 1)
    np.testing.assert_allclose(D.hermite(X, xp, f(xp), df(xp)).der[:, 0], df(xs), atol=1e-11)
