"""Tensor Gauss-Legendre quadrature over rectangles, plus a side-splitting
variant for integrands that switch definition across an interface curve."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _gl_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_legendre(n: int, a: float, b: float):
    """Nodes and weights for the interval [a, b]."""
    x, w = _gl_nodes(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def integrate_rect(fn, rect, n: int) -> float:
    """Integrate ``fn(X, Y)`` (vectorized over 2D arrays) on a rectangle.

    ``rect`` is (x0, x1, y0, y1); ``n`` is the node count per axis.
    """
    x0, x1, y0, y1 = rect
    xs, wx = gauss_legendre(n, x0, x1)
    ys, wy = gauss_legendre(n, y0, y1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = np.asarray(fn(X, Y), dtype=float)
    return float(np.einsum("i,j,ij->", wx, wy, vals))


def integrate_two_sided(fn_side1, fn_side2, in_side2, rect, n: int = 6,
                        depth: int = 6) -> float:
    """Integrate a field that is ``fn_side1`` where ``in_side2`` is False and
    ``fn_side2`` where it is True.

    Cells crossed by the interface are subdivided ``depth`` times; leftover
    straddling leaves are assigned by their center.  Probe points are the
    four corners plus the center.
    """
    x0, x1, y0, y1 = rect

    def probe(r):
        a, b, c, d = r
        px = np.array([a, b, a, b, 0.5 * (a + b)])
        py = np.array([c, c, d, d, 0.5 * (c + d)])
        return np.asarray(in_side2(px, py), dtype=bool)

    def recurse(r, d):
        flags = probe(r)
        if flags.all():
            return integrate_rect(fn_side2, r, n)
        if not flags.any():
            return integrate_rect(fn_side1, r, n)
        if d == 0:
            fn = fn_side2 if flags[4] else fn_side1
            return integrate_rect(fn, r, n)
        a, b, c, e = r
        mx, my = 0.5 * (a + b), 0.5 * (c + e)
        return (
            recurse((a, mx, c, my), d - 1)
            + recurse((mx, b, c, my), d - 1)
            + recurse((a, mx, my, e), d - 1)
            + recurse((mx, b, my, e), d - 1)
        )

    # Start from a 4x4 split so the recursion depth is spent near the curve.
    total = 0.0
    xs = np.linspace(x0, x1, 5)
    ys = np.linspace(y0, y1, 5)
    for i in range(4):
        for j in range(4):
            total += recurse((xs[i], xs[i + 1], ys[j], ys[j + 1]), depth)
    return total
