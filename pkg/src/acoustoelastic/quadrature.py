"""Quadrature rules on the reference triangle and on line segments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    """Barycentric points ``(n, 3)`` and weights summing to one (multiply by area)."""

    bary: np.ndarray
    weights: np.ndarray
    degree: int

    def points(self, corners):
        """Physical points for triangles ``corners`` of shape ``(m, 3, 2)`` -> ``(m, n, 2)``."""
        return np.einsum("qk,mkd->mqd", self.bary, corners)


def _three_point():
    b = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return TriangleRule(b, np.full(3, 1 / 3), 2)


def _seven_point():
    # Radon's degree-5 rule.
    s15 = np.sqrt(15.0)
    a1, b1 = (6 - s15) / 21, (9 + 2 * s15) / 21
    a2, b2 = (6 + s15) / 21, (9 - 2 * s15) / 21
    w1, w2 = (155 - s15) / 1200, (155 + s15) / 1200
    bary = [[1 / 3, 1 / 3, 1 / 3]]
    bary += [[b1, a1, a1], [a1, b1, a1], [a1, a1, b1]]
    bary += [[b2, a2, a2], [a2, b2, a2], [a2, a2, b2]]
    weights = [9 / 40] + [w1] * 3 + [w2] * 3
    return TriangleRule(np.array(bary), np.array(weights), 5)


TRI3 = _three_point()
TRI7 = _seven_point()


def triangle_rule(degree: int) -> TriangleRule:
    if degree <= 2:
        return TRI3
    if degree <= 5:
        return TRI7
    raise ValueError(f"no triangle rule of degree {degree}")


@dataclass(frozen=True)
class LineRule:
    """Gauss-Legendre rule on ``[0, 1]``: parameters ``s`` and weights summing to one."""

    s: np.ndarray
    weights: np.ndarray

    def points(self, p0, p1):
        """Points on segments ``p0 -> p1`` (each ``(m, 2)``) -> ``(m, n, 2)``."""
        return p0[:, None, :] + self.s[None, :, None] * (p1 - p0)[:, None, :]


def line_rule(n_points: int) -> LineRule:
    x, w = np.polynomial.legendre.leggauss(n_points)
    return LineRule(0.5 * (x + 1.0), 0.5 * w)
