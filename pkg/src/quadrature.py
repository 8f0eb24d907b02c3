#!/usr/bin/env python3
"""
Quadrature Module
Handles reference-element rules for triangles, tetrahedra and singular triangle pairs

Triangle rules use the reference chart x = P0 + s (P1 - P0) + t (P2 - P1) on
0 <= t <= s <= 1, whose Jacobian is twice the triangle area. Points are
returned as barycentric weights (1 - s, s - t, t) of the three corners.
"""

import numpy as np
from functools import lru_cache
from typing import Tuple
from pydantic import BaseModel, Field


class QuadratureConfig(BaseModel):
    """Quadrature orders (Gauss points per dimension) per integration regime."""
    singular_order: int = Field(4, ge=1, le=12)
    regular_order: int = Field(3, ge=1, le=12)
    potential_order: int = Field(4, ge=1, le=16)
    volume_order: int = Field(2, ge=1, le=8)


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _barycentric(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - s, s - t, t], axis=-1)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collapsed tensor Gauss rule on the reference triangle.

    Args:
        order (int): Points per dimension

    Returns:
        Tuple[np.ndarray, np.ndarray]: Barycentric points (Q, 3) and weights (Q,) summing to 1/2
    """
    x, w = gauss_legendre_01(order)
    u, v = np.meshgrid(x, x, indexing='ij')
    wu, wv = np.meshgrid(w, w, indexing='ij')
    s = u.ravel()
    t = (u * v).ravel()
    weights = (wu * wv * u).ravel()
    return _barycentric(s, t), weights


@lru_cache(maxsize=None)
def tetrahedron_rule(order: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tetrahedron rule in barycentric form, weights summing to 1/6.

    order 1 is the centroid rule, order 2 the 4-point degree-2 rule, higher
    orders a collapsed tensor Gauss rule with order^3 points.
    """
    if order == 1:
        return np.full((1, 4), 0.25), np.array([1.0 / 6.0])
    if order == 2:
        a = 0.5854101966249685
        b = 0.1381966011250105
        points = np.array([[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]])
        return points, np.full(4, 1.0 / 24.0)

    x, w = gauss_legendre_01(order)
    u, v, s = np.meshgrid(x, x, x, indexing='ij')
    wu, wv, ws = np.meshgrid(w, w, w, indexing='ij')
    l1 = u
    l2 = (1.0 - u) * v
    l3 = (1.0 - u) * (1.0 - v) * s
    l0 = 1.0 - l1 - l2 - l3
    weights = wu * wv * ws * (1.0 - u) ** 2 * (1.0 - v)
    points = np.stack([l0.ravel(), l1.ravel(), l2.ravel(), l3.ravel()], axis=1)
    return points, weights.ravel()


@lru_cache(maxsize=None)
def _hypercube(order: int):
    x, w = gauss_legendre_01(order)
    grids = np.meshgrid(x, x, x, x, indexing='ij')
    wgrids = np.meshgrid(w, w, w, w, indexing='ij')
    xi, e1, e2, e3 = (g.ravel() for g in grids)
    weight = np.prod([g.ravel() for g in wgrids], axis=0)
    return xi, e1, e2, e3, weight


@lru_cache(maxsize=None)
def sauter_schwab_rule(regime: str, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sauter-Schwab rule for a pair of triangles touching in a singular configuration.

    The test and trial triangles must be ordered so that, for 'edge', their
    shared edge is corner 0 -> corner 1 in both and, for 'vertex', the shared
    vertex is corner 0 in both.

    Args:
        regime (str): 'coincident', 'edge' or 'vertex'
        order (int): Gauss points per dimension of the 4D hypercube

    Returns:
        Tuple: Barycentric test points (N, 3), barycentric trial points (N, 3),
               weights (N,) summing to 1/4 (multiply by both chart Jacobians)
    """
    xi, e1, e2, e3, w = _hypercube(order)
    maps = []

    if regime == "coincident":
        jac = w * xi ** 3 * e1 ** 2 * e2
        a = ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1)))
        b = ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)))
        c = ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2)))
        for x, y in (a, b, c):
            maps.append((x, y, jac))
            maps.append((y, x, jac))
    elif regime == "edge":
        first = w * xi ** 3 * e1 ** 2
        rest = first * e2
        maps.append(((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), first))
        maps.append(((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), rest))
        maps.append(((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e3), rest))
        maps.append(((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), rest))
        maps.append(((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), rest))
    elif regime == "vertex":
        jac = w * xi ** 3 * e2
        x = (xi, xi * e1)
        y = (xi * e2, xi * e2 * e3)
        maps.append((x, y, jac))
        maps.append((y, x, jac))
    else:
        raise ValueError(f"unknown singular regime '{regime}'")

    test = np.concatenate([_barycentric(*x) for x, _, _ in maps])
    trial = np.concatenate([_barycentric(*y) for _, y, _ in maps])
    weights = np.concatenate([jw for _, _, jw in maps])
    return test, trial, weights
