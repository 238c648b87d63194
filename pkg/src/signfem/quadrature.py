"""Quadrature rules on the reference triangle.

Rules are given in barycentric coordinates.  ``triangle_rule(degree)``
returns points of shape (Q, 3) and weights summing to one, so that

    integral_T g  ~=  area(T) * sum_q  w_q * g(x_q).

Degrees up to 6 use hard-coded symmetric Gauss tables; higher degrees
fall back to a collapsed tensor-product Gauss rule, which is exact for
the requested total degree (all points strictly inside the triangle).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _sym3(a):
    # permutations of (1-2a, a, a)
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _sym6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


_TABLES = {
    1: ([(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)], [1.0]),
    2: (_sym3(1.0 / 6.0), [1.0 / 3.0] * 3),
    4: (
        _sym3(0.445948490915965) + _sym3(0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    6: (
        _sym3(0.249286745170910)
        + _sym3(0.063089014491502)
        + _sym6(0.053145049844816, 0.310352451033785),
        [0.116786275726379] * 3
        + [0.050844906370207] * 3
        + [0.082851075618374] * 6,
    ),
}
_TABLES[3] = _TABLES[4]
_TABLES[5] = _TABLES[6]


def _collapsed_rule(degree):
    """Tensor Gauss-Legendre on the square, mapped to the triangle.

    The map (u, v) -> (u, v(1-u)) has Jacobian (1-u); a monomial of
    total degree d becomes degree d+1 in u and d in v, which fixes the
    required 1D orders.
    """
    nu = (degree + 3) // 2
    nv = (degree + 2) // 2
    xu, wu = np.polynomial.legendre.leggauss(nu)
    xv, wv = np.polynomial.legendre.leggauss(nv)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.5 * wv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    w = (np.outer(wu * (1.0 - u), wv)).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    return pts, 2.0 * w  # reference triangle has area 1/2


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Return (points, weights) for a rule exact on P_degree.

    points has shape (Q, 3) in barycentric coordinates, weights sum to 1.
    """
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    if degree in _TABLES:
        pts, w = _TABLES[degree]
        pts = np.array(pts, dtype=float)
        w = np.array(w, dtype=float)
    else:
        pts, w = _collapsed_rule(degree)
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def physical_points(vertex_coords, bary):
    """Map barycentric points onto triangles.

    vertex_coords: (..., 3, 2) triangle vertices; bary: (Q, 3).
    Returns points of shape (..., Q, 2).
    """
    return np.einsum("qj,...jk->...qk", bary, vertex_coords)
