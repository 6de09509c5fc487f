"""Quadrature rules on the reference triangle.

Rules are returned in barycentric form: ``bary`` has shape (nq, 3) and the
weights sum to one, so an integral over a physical triangle is
``area * sum(w * f(x_q))``.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_ORDER = 10


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    pts = [(a, a, b), (a, b, a), (b, a, a)]
    return pts, [w] * 3


def _conical_rule(order):
    # collapsed Gauss-Jacobi x Gauss-Legendre, exact to degree 2n-1
    n = (order + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (1.0 + xj)
    v = 0.5 * (1.0 + xl)
    wu = 0.25 * wj
    wv = 0.5 * wl
    U, V = np.meshgrid(u, v, indexing="ij")
    xi = U.ravel()
    eta = ((1.0 - U) * V).ravel()
    w = np.outer(wu, wv).ravel() / 0.5
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return bary, w


@lru_cache(maxsize=None)
def triangle_rule(order=4):
    """Return ``(bary, weights)`` exact for polynomials of degree ``order``.

    Orders 1, 2, 4 and 5 use the classical symmetric rules (1, 3, 6 and 7
    points); order 3 reuses the 6-point rule and orders 6..10 fall back to a
    conical product Gauss rule.
    """
    if order < 1 or order > MAX_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")
    if order == 1:
        bary = np.array([[1.0, 1.0, 1.0]]) / 3.0
        w = np.array([1.0])
    elif order == 2:
        pts, ws = _orbit3(1.0 / 6.0, 1.0 / 3.0)
        bary, w = np.array(pts), np.array(ws)
    elif order in (3, 4):
        p1, w1 = _orbit3(0.445948490915965, 0.223381589678011)
        p2, w2 = _orbit3(0.091576213509771, 0.109951743655322)
        bary, w = np.array(p1 + p2), np.array(w1 + w2)
    elif order == 5:
        p1, w1 = _orbit3(0.470142064105115, 0.132394152788506)
        p2, w2 = _orbit3(0.101286507323456, 0.125939180544827)
        bary = np.array([[1.0 / 3, 1.0 / 3, 1.0 / 3]] + p1 + p2)
        w = np.array([0.225] + w1 + w2)
    else:
        bary, w = _conical_rule(order)
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def subdivision_rule(s):
    """Centroids of the s*s congruent subtriangles, equal weights."""
    if s < 1:
        raise ValueError("subdivision must be >= 1")
    pts = []
    for i in range(s):
        for j in range(s - i):
            # upward subtriangle with lower-left corner (i, j)
            pts.append(((i + 1.0 / 3) / s, (j + 1.0 / 3) / s))
            if i + j < s - 1:
                pts.append(((i + 2.0 / 3) / s, (j + 2.0 / 3) / s))
    xy = np.array(pts)
    bary = np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
    w = np.full(len(bary), 1.0 / (s * s))
    return bary, w
