"""Quadrature rules: Gauss-Legendre on (0,1) and symmetric simplex rules.

Triangle rules return barycentric points and weights summing to 1, so
integral over a cell K = area(K) * sum(w * f(x)). Tabulated symmetric rules
cover degree <= 6; higher degrees fall back to a tensor rule under the
collapsed-square (Duffy) map.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss


def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on (0,1); exact through degree 2n-1."""
    if n < 1:
        raise ValueError("need at least one point")
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_1d_for_degree(degree: int) -> tuple[np.ndarray, np.ndarray]:
    return gauss_1d(max(1, degree // 2 + 1))


def _orbit3(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


def _orbit6(a: float, b: float) -> np.ndarray:
    c = 1.0 - a - b
    return np.array(
        [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
    )


_TRIANGLE_TABLE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _build_triangle_table():
    t = {}
    t[1] = (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]))
    t[2] = (_orbit3(1 / 6), np.full(3, 1 / 3))
    pts = np.vstack([_orbit3(0.445948490915965), _orbit3(0.091576213509771)])
    w = np.concatenate(
        [np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]
    )
    t[4] = (pts, w)
    pts = np.vstack(
        [
            np.array([[1 / 3, 1 / 3, 1 / 3]]),
            _orbit3(0.470142064105115),
            _orbit3(0.101286507323456),
        ]
    )
    w = np.concatenate(
        [
            np.array([0.225]),
            np.full(3, 0.132394152788506),
            np.full(3, 0.125939180544827),
        ]
    )
    t[5] = (pts, w)
    pts = np.vstack(
        [
            _orbit3(0.249286745170910),
            _orbit3(0.063089014491502),
            _orbit6(0.310352451033785, 0.636502499121399),
        ]
    )
    w = np.concatenate(
        [
            np.full(3, 0.116786275726379),
            np.full(3, 0.050844906370207),
            np.full(6, 0.082851075618374),
        ]
    )
    t[6] = (pts, w)
    t[3] = t[4]
    return t


_TRIANGLE_TABLE = _build_triangle_table()


def _triangle_duffy(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # f(u, v(1-u))*(1-u) on the square: degree+1 in u, degree in v
    n = degree // 2 + 2
    xu, wu = gauss_1d(n)
    xv, wv = gauss_1d(n)
    u = np.repeat(xu, n)
    v = np.tile(xv, n)
    x = u
    y = v * (1.0 - u)
    w = 2.0 * np.repeat(wu, n) * np.tile(wv, n) * (1.0 - u)
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    return bary, w


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for total polynomial degree `degree` on a triangle."""
    if degree < 1:
        degree = 1
    if degree in _TRIANGLE_TABLE:
        return _TRIANGLE_TABLE[degree]
    return _triangle_duffy(degree)
