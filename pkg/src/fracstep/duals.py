"""Forward-mode scalars carrying a gradient and, optionally, a Hessian.

The backstepping stages need exact partial derivatives of each virtual
control with respect to the states and parameter estimates, and the next
stage differentiates those partials once more.  A ``Dual`` therefore
carries value + gradient always, and a dense Hessian when a later stage
will need second-order information.  Mixing a Hessian-free Dual into an
expression silently drops the Hessian of the result, which is exactly the
truncation the stage recursion wants.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dual", "independents", "dual_dot", "value_of"]


class Dual:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val: float, grad: np.ndarray, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                h = self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, h)
        return Dual(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __sub__(self, other):
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                h = self.hess - other.hess
            return Dual(self.val - other.val, self.grad - other.grad, h)
        return Dual(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                cross = np.outer(self.grad, other.grad)
                h = self.val * other.hess + other.val * self.hess + cross + cross.T
            return Dual(
                self.val * other.val,
                self.val * other.grad + other.val * self.grad,
                h,
            )
        return Dual(self.val * other, self.grad * other, None if self.hess is None else self.hess * other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Dual({self.val!r}, grad={self.grad!r}, hess={'yes' if self.hess is not None else 'no'})"

    def detach_hess(self) -> "Dual":
        return Dual(self.val, self.grad, None)

    def partial(self, index: int) -> "Dual":
        """The partial derivative w.r.t. independent ``index``, as a Dual.

        Its gradient is the corresponding Hessian row, so one more level
        of differentiation stays exact; its own Hessian is unknown.
        """
        if self.hess is None:
            raise ValueError("second-order information was not propagated")
        return Dual(float(self.grad[index]), self.hess[index].copy(), None)


def independents(values, m: int, offset: int, with_hess: bool):
    """Duals for consecutive independent variables starting at ``offset``."""
    out = []
    for i, v in enumerate(values):
        g = np.zeros(m)
        g[offset + i] = 1.0
        out.append(Dual(float(v), g, np.zeros((m, m)) if with_hess else None))
    return out


def dual_dot(vec_a, vec_b):
    """Dot product of two sequences whose entries are Duals or floats."""
    total = 0.0
    for a, b in zip(vec_a, vec_b, strict=True):
        total = total + a * b
    return total


def value_of(x) -> float:
    return x.val if isinstance(x, Dual) else float(x)
