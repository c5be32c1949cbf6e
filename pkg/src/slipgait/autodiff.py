"""Forward-mode automatic differentiation with (optionally batched) dual numbers.

A ``Dual`` carries a primal value and a tangent block. Values may be python
floats or numpy arrays of shape ``(...,)``; tangents always have one extra
trailing axis holding ``ntan`` directional derivatives, so a single evaluation
of a function written with the helpers below yields a full Jacobian slice.

Only the operations needed by the plant dynamics and transcription are
implemented (arithmetic, sqrt, exp). Smooth code written against the module
helpers (`sqrt`, `exp`) runs unchanged on floats, numpy arrays, and Duals.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    """Primal/tangent pair. ``tan`` has shape ``val.shape + (ntan,)``."""

    __slots__ = ("val", "tan")

    def __init__(self, val, tan):
        self.val = val
        self.tan = tan

    # -- coercion -------------------------------------------------------
    @staticmethod
    def _tan_of(other, like_tan):
        # constants have zero tangent
        return None

    def _binary(self, other):
        if isinstance(other, Dual):
            return other.val, other.tan
        return other, None

    @staticmethod
    def _scale(tan, factor):
        # multiply a tangent block by a primal factor (broadcast over tangent axis)
        if np.ndim(factor) == 0:
            return tan * factor
        return tan * np.asarray(factor)[..., None]

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        ov, ot = self._binary(other)
        return Dual(self.val + ov, self.tan if ot is None else self.tan + ot)

    __radd__ = __add__

    def __sub__(self, other):
        ov, ot = self._binary(other)
        return Dual(self.val - ov, self.tan if ot is None else self.tan - ot)

    def __rsub__(self, other):
        ov, ot = self._binary(other)
        return Dual(ov - self.val, -self.tan if ot is None else ot - self.tan)

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __mul__(self, other):
        ov, ot = self._binary(other)
        tan = self._scale(self.tan, ov)
        if ot is not None:
            tan = tan + self._scale(ot, self.val)
        return Dual(self.val * ov, tan)

    __rmul__ = __mul__

    def __truediv__(self, other):
        ov, ot = self._binary(other)
        inv = 1.0 / ov
        tan = self._scale(self.tan, inv)
        if ot is not None:
            tan = tan - self._scale(ot, self.val * inv * inv)
        return Dual(self.val * inv, tan)

    def __rtruediv__(self, other):
        # other / self, other a constant
        ov, ot = self._binary(other)
        val = ov / self.val
        tan = self._scale(self.tan, -ov / (self.val * self.val))
        if ot is not None:
            tan = tan + self._scale(ot, 1.0 / self.val)
        return Dual(val, tan)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("Dual ** exponent must be a plain number")
        val = self.val ** p
        return Dual(val, self._scale(self.tan, p * self.val ** (p - 1.0)))

    def __repr__(self):
        return f"Dual(val={self.val!r})"


def sqrt(x):
    if isinstance(x, Dual):
        root = np.sqrt(x.val) if np.ndim(x.val) else math.sqrt(x.val)
        return Dual(root, Dual._scale(x.tan, 0.5 / root))
    if np.ndim(x):
        return np.sqrt(x)
    return math.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.val) if np.ndim(x.val) else math.exp(x.val)
        return Dual(e, Dual._scale(x.tan, e))
    if np.ndim(x):
        return np.exp(x)
    return math.exp(x)


def value(x):
    """Primal part of a Dual, or the input itself."""
    return x.val if isinstance(x, Dual) else x


def tangent(x, ntan, shape=()):
    """Tangent block of x, or zeros for constants."""
    if isinstance(x, Dual):
        return x.tan
    return np.zeros(tuple(shape) + (ntan,))


def seed(x):
    """Lift a vector into Duals seeded with the identity tangent basis.

    Returns a list of scalar Duals, one per entry of ``x``, each carrying an
    ``n``-dimensional one-hot tangent.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    out = []
    for i, xi in enumerate(x.ravel()):
        t = np.zeros(n)
        t[i] = 1.0
        out.append(Dual(float(xi), t))
    return out


def jacobian(f, x):
    """Dense Jacobian of ``f`` (vector -> sequence of scalars) at ``x``.

    ``f`` must be written against the module helpers so Duals flow through.
    """
    duals = seed(x)
    out = f(duals)
    if isinstance(out, Dual):
        out = [out]
    rows = []
    for o in out:
        rows.append(o.tan if isinstance(o, Dual) else np.zeros(np.size(x)))
    return np.asarray(rows)


def gradient(f, x):
    """Gradient of a scalar function via one batched forward pass."""
    jac = jacobian(f, x)
    if jac.shape[0] != 1:
        raise ValueError("gradient() expects a scalar-valued function")
    return jac[0]
