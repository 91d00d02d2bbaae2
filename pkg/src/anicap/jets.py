"""Vectorized forward-mode differentiation up to third order.

A Jet3 carries the value, gradient, Hessian and third-derivative tensor of a
scalar function of d ambient variables, batched over an arbitrary number of
evaluation points.  Shapes: val (B,), grad (B,d), hess (B,d,d),
third (B,d,d,d).  All norm-family derivatives (DF, D^2F, D^3F and the
Legendre jets of (1/2)F^2) are assembled from this arithmetic, so they are
exact to roundoff.
"""
from __future__ import annotations

import numpy as np


class Jet3:
    __slots__ = ("val", "grad", "hess", "third")

    def __init__(self, val, grad, hess, third):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)
        self.third = np.asarray(third, dtype=float)

    # -- seeds ---------------------------------------------------------
    @staticmethod
    def coordinate(y, i):
        """Jet of the coordinate function y -> y_i at points y (B,d)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        B, d = y.shape
        g = np.zeros((B, d))
        g[:, i] = 1.0
        return Jet3(y[:, i], g, np.zeros((B, d, d)), np.zeros((B, d, d, d)))

    @staticmethod
    def constant(c, B, d):
        return Jet3(np.full(B, float(c)), np.zeros((B, d)),
                    np.zeros((B, d, d)), np.zeros((B, d, d, d)))

    @staticmethod
    def linear_form(y, c):
        """Jet of y -> <c, y>."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        c = np.asarray(c, dtype=float)
        B, d = y.shape
        g = np.broadcast_to(c, (B, d)).copy()
        return Jet3(y @ c, g, np.zeros((B, d, d)), np.zeros((B, d, d, d)))

    @staticmethod
    def quadratic_form(y, M):
        """Jet of y -> y^T M y for symmetric M."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        M = np.asarray(M, dtype=float)
        B, d = y.shape
        My = y @ M.T
        val = np.einsum("bi,bi->b", y, My)
        hess = np.broadcast_to(2.0 * M, (B, d, d)).copy()
        return Jet3(val, 2.0 * My, hess, np.zeros((B, d, d, d)))

    # -- ring operations -----------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet3):
            return Jet3(self.val + other.val, self.grad + other.grad,
                        self.hess + other.hess, self.third + other.third)
        return Jet3(self.val + other, self.grad, self.hess, self.third)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.val, -self.grad, -self.hess, -self.third)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet3) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            c = np.asarray(other, dtype=float)
            if c.ndim > 0:  # nodal scalar field
                return Jet3(self.val * c, self.grad * c[:, None],
                            self.hess * c[:, None, None],
                            self.third * c[:, None, None, None])
            return Jet3(self.val * c, self.grad * c, self.hess * c, self.third * c)
        f, g = self, other
        val = f.val * g.val
        grad = f.grad * g.val[:, None] + g.grad * f.val[:, None]
        fg = np.einsum("bi,bj->bij", f.grad, g.grad)
        hess = (f.hess * g.val[:, None, None] + g.hess * f.val[:, None, None]
                + fg + fg.transpose(0, 2, 1))
        third = (f.third * g.val[:, None, None, None]
                 + g.third * f.val[:, None, None, None])
        for (h, v) in ((f.hess, g.grad), (g.hess, f.grad)):
            hv = np.einsum("bij,bk->bijk", h, v)
            third = third + hv + hv.transpose(0, 1, 3, 2) + hv.transpose(0, 3, 1, 2)
        return Jet3(val, grad, hess, third)

    __rmul__ = __mul__

    def compose(self, p0, p1, p2, p3):
        """Jet of phi(f) given phi derivatives p0..p3 evaluated at f.val."""
        f = self
        gg = np.einsum("bi,bj->bij", f.grad, f.grad)
        ggg = np.einsum("bi,bj,bk->bijk", f.grad, f.grad, f.grad)
        hg = np.einsum("bij,bk->bijk", f.hess, f.grad)
        sym_hg = hg + hg.transpose(0, 1, 3, 2) + hg.transpose(0, 3, 1, 2)
        val = p0
        grad = p1[:, None] * f.grad
        hess = p1[:, None, None] * f.hess + p2[:, None, None] * gg
        third = (p1[:, None, None, None] * f.third
                 + p2[:, None, None, None] * sym_hg
                 + p3[:, None, None, None] * ggg)
        return Jet3(val, grad, hess, third)

    def sqrt(self):
        r = np.sqrt(self.val)
        return self.compose(r, 0.5 / r, -0.25 / r**3, 0.375 / r**5)

    def reciprocal(self):
        v = self.val
        return self.compose(1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4)

    def __truediv__(self, other):
        if isinstance(other, Jet3):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def power(self, k: int):
        """Integer power by repeated multiplication (small k)."""
        if k == 0:
            B, d = self.grad.shape
            return Jet3.constant(1.0, B, d)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out


def coordinate_jets(y):
    """List of coordinate jets for points y (B,d)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return [Jet3.coordinate(y, i) for i in range(y.shape[1])]
