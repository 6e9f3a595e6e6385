"""Forward-mode automatic differentiation on numpy arrays.

A :class:`Dual` carries a value array of shape ``S`` and a derivative array of
shape ``S + (n,)`` holding the partials with respect to ``n`` seed directions.
The module-level math functions accept plain floats/arrays as well, so the
same model code runs with or without derivatives.
"""

from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("val", "der")
    __array_priority__ = 1000  # make ndarray binary ops defer to us

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @classmethod
    def seed(cls, val, index: int, n: int) -> "Dual":
        """Independent variable along seed direction ``index`` of ``n``."""
        val = np.asarray(val, dtype=float)
        der = np.zeros(val.shape + (n,))
        der[..., index] = 1.0
        return cls(val, der)

    @classmethod
    def constant(cls, val, n: int) -> "Dual":
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros(val.shape + (n,)))

    @property
    def shape(self):
        return self.val.shape

    @property
    def nder(self) -> int:
        return self.der.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, der={self.der!r})"

    def __getitem__(self, idx):
        if isinstance(idx, tuple):
            return Dual(self.val[idx], self.der[idx + (slice(None),)])
        return Dual(self.val[idx], self.der[idx])

    # arithmetic
    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        other = np.asarray(other)
        return Dual(self.val + other, np.broadcast_to(self.der, np.broadcast_shapes(self.val.shape, other.shape) + (self.nder,)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.der * other.val[..., None] + other.der * self.val[..., None])
        other = np.asarray(other)
        return Dual(self.val * other, self.der * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.der - other.der * q[..., None]) / other.val[..., None])
        other = np.asarray(other)
        return Dual(self.val / other, self.der / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other)
        q = other / self.val
        return Dual(q, -self.der * (q / self.val)[..., None])

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        return Dual(self.val**p, self.der * (p * self.val ** (p - 1))[..., None])

    # comparisons act on values only
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def sum(self, axis=None):
        if axis is None:
            return Dual(self.val.sum(), self.der.reshape(-1, self.nder).sum(axis=0))
        axis = axis % self.val.ndim
        return Dual(self.val.sum(axis=axis), self.der.sum(axis=axis))


def value(x):
    return x.val if isinstance(x, Dual) else x


def derivative(x, n: int):
    if isinstance(x, Dual):
        return x.der
    return np.zeros(np.shape(x) + (n,))


def _chain(x, f, df):
    if isinstance(x, Dual):
        return Dual(f(x.val), x.der * df(x.val)[..., None])
    return f(x)


def sin(x):
    return _chain(x, np.sin, np.cos)


def cos(x):
    return _chain(x, np.cos, lambda v: -np.sin(v))


def tan(x):
    return _chain(x, np.tan, lambda v: 1.0 / np.cos(v) ** 2)


def exp(x):
    return _chain(x, np.exp, np.exp)


def log(x):
    return _chain(x, np.log, lambda v: 1.0 / v)


def sqrt(x):
    return _chain(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def arccos(x):
    return _chain(x, np.arccos, lambda v: -1.0 / np.sqrt(1.0 - v * v))


def absolute(x):
    return _chain(x, np.abs, np.sign)


def where(cond, a, b):
    """Elementwise select; derivatives follow the selected branch."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(cond, a, b)
    n = a.nder if isinstance(a, Dual) else b.nder
    av, bv = value(a), value(b)
    val = np.where(cond, av, bv)
    c = np.asarray(cond)[..., None]
    der = np.where(c, derivative(a, n) if isinstance(a, Dual) else 0.0,
                   derivative(b, n) if isinstance(b, Dual) else 0.0)
    return Dual(val, np.broadcast_to(der, val.shape + (n,)))


def hermite(x, xp, fp, dfp):
    """Cubic Hermite interpolation through (xp, fp) with node slopes dfp.

    ``x`` must lie inside ``[xp[0], xp[-1]]``; works on floats and Duals.
    """
    xv = value(x)
    k = np.clip(np.searchsorted(xp, xv, side="right") - 1, 0, len(xp) - 2)
    x0, x1 = xp[k], xp[k + 1]
    h = x1 - x0
    t = (x - x0) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * fp[k] + h10 * (h * dfp[k]) + h01 * fp[k + 1] + h11 * (h * dfp[k + 1])
