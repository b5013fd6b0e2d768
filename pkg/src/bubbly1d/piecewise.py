"""Exact piecewise-linear functions on a partition of an interval.

Each piece is affine and described by its values at the two ends of the
interval, so discontinuities between pieces are allowed.  Integrals and
norms are evaluated in closed form.
"""
from __future__ import annotations

import numpy as np


class PiecewiseLinear:
    """Piecewise-affine function on ``breaks[0] < breaks[1] < ... < breaks[-1]``.

    Parameters
    ----------
    breaks : array_like, shape (M + 1,)
        Strictly increasing break points.
    left, right : array_like, shape (M,)
        Values at the left and right end of every piece.
    """

    def __init__(self, breaks, left, right):
        self.breaks = np.asarray(breaks, dtype=float)
        self.left = np.asarray(left, dtype=float)
        self.right = np.asarray(right, dtype=float)
        if self.breaks.ndim != 1 or self.breaks.size < 2:
            raise ValueError("need at least two break points")
        if self.left.shape != (self.breaks.size - 1,) or self.right.shape != self.left.shape:
            raise ValueError("left/right must have one value per piece")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("break points must be strictly increasing")
        h = np.diff(self.breaks)
        self._cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (self.left + self.right))))

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_nodes(cls, x, v):
        """Continuous interpolant through ``(x_i, v_i)``."""
        v = np.asarray(v, dtype=float)
        return cls(x, v[:-1], v[1:])

    @classmethod
    def constant(cls, a, b, value):
        return cls([a, b], [value], [value])

    @classmethod
    def piecewise_constant(cls, breaks, values):
        values = np.asarray(values, dtype=float)
        return cls(breaks, values, values)

    @classmethod
    def concatenate(cls, parts):
        """Join functions whose domains abut end to start."""
        parts = list(parts)
        for p, q in zip(parts[:-1], parts[1:]):
            if p.breaks[-1] != q.breaks[0]:
                raise ValueError("pieces do not abut")
        breaks = np.concatenate([parts[0].breaks] + [p.breaks[1:] for p in parts[1:]])
        return cls(breaks, np.concatenate([p.left for p in parts]),
                   np.concatenate([p.right for p in parts]))

    # -- basic queries --------------------------------------------------
    @property
    def domain(self):
        return float(self.breaks[0]), float(self.breaks[-1])

    @property
    def slopes(self):
        return (self.right - self.left) / np.diff(self.breaks)

    def _piece(self, x, side="right"):
        j = np.searchsorted(self.breaks, x, side=side) - 1
        if side == "left":
            j = np.where(np.asarray(x) <= self.breaks[0], 0, j)
        return np.clip(j, 0, self.left.size - 1)

    def __call__(self, x, side="right"):
        """Evaluate; at a break point ``side`` selects the right or left limit."""
        x = np.asarray(x, dtype=float)
        j = self._piece(x, side)
        h = self.breaks[j + 1] - self.breaks[j]
        s = (x - self.breaks[j]) / h
        return (1.0 - s) * self.left[j] + s * self.right[j]

    def left_limits(self):
        """Left limits at the interior break points."""
        return self.right[:-1]

    def right_limits(self):
        return self.left[1:]

    def jumps(self):
        """Right minus left limit at every interior break point."""
        return self.left[1:] - self.right[:-1]

    # -- integrals and norms --------------------------------------------
    def antiderivative(self, x):
        """Exact primitive vanishing at ``breaks[0]``; constant outside the domain."""
        x = np.clip(np.asarray(x, dtype=float), self.breaks[0], self.breaks[-1])
        j = self._piece(x)
        t = x - self.breaks[j]
        slope = self.slopes[j]
        return self._cum[j] + t * (self.left[j] + 0.5 * slope * t)

    def integrate(self, a=None, b=None):
        """Exact integral over ``[a, b]`` (clipped to the domain)."""
        lo, hi = self.domain
        a = lo if a is None else a
        b = hi if b is None else b
        return self.antiderivative(b) - self.antiderivative(a)

    def l2_norm_sq(self):
        h = np.diff(self.breaks)
        a, b = self.left, self.right
        return float(np.sum(h * (a * a + a * b + b * b) / 3.0))

    def h1_seminorm_sq(self):
        """Squared L2 norm of the derivative, ignoring any jumps."""
        return float(np.sum((self.right - self.left) ** 2 / np.diff(self.breaks)))

    def h1_norm_sq(self):
        return self.l2_norm_sq() + self.h1_seminorm_sq()

    def restrict(self, a, b):
        """Restriction to ``[a, b]`` where a and b are break points."""
        i = int(np.searchsorted(self.breaks, a))
        k = int(np.searchsorted(self.breaks, b))
        if self.breaks[i] != a or self.breaks[k] != b or k <= i:
            raise ValueError("restriction bounds must be distinct break points")
        return PiecewiseLinear(self.breaks[i:k + 1], self.left[i:k], self.right[i:k])

    def __mul__(self, other):
        """Product with a scalar."""
        return PiecewiseLinear(self.breaks, self.left * other, self.right * other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"PiecewiseLinear(pieces={self.left.size}, domain={self.domain})"
