"""Compressed radial coordinate map and the coefficients of the transformed wave equation.

The map fixes the ball ``r <= a`` and sends the shell ``a < rho < R`` onto the
thin shell ``a < r < b``.  Under ``rho = zeta(r)`` the acoustic operator
``c^-2 d_tt - Laplacian`` becomes ``beta c^-2 d_tt - div(M grad)``; the
functions below evaluate ``beta``, ``M``, the divergence weight ``K`` and the
local frame ``Q`` in two and three dimensions, and check the pullback
identities numerically with central differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class MapDomainError(ValueError):
    """A radius or sample point lies outside the domain of the map."""


@dataclass(frozen=True)
class RadialMap:
    """Piecewise radial map ``zeta``: identity on ``[0, a]``, rational ``eta`` on ``[a, b]``.

    Parameters
    ----------
    a : float
        Radius of the identity region.
    b : float
        Outer radius of the computational (compressed) domain.
    R : float
        Physical truncation radius; ``zeta(b) = R``.
    dimension : int
        2 or 3.
    """

    a: float
    b: float
    R: float
    dimension: int = 2

    def __post_init__(self):
        if not (0.0 < self.a < self.b < self.R):
            raise MapDomainError(
                f"radii must satisfy 0 < a < b < R, got a={self.a}, b={self.b}, R={self.R}"
            )
        if self.dimension not in (2, 3):
            raise MapDomainError(f"dimension must be 2 or 3, got {self.dimension}")

    @classmethod
    def identity(cls, radius: float, dimension: int = 2) -> "IdentityMap":
        return IdentityMap(radius, dimension)

    @property
    def outer_radius(self) -> float:
        return self.b

    def _denominator(self, r):
        a, b, R = self.a, self.b, self.R
        return (b - r) * (R - b) + (b - a) ** 2

    def eta(self, r):
        # Algebraically xi / denominator; written as a + O(r - a) to avoid cancellation when b - a << a.
        a, b, R = self.a, self.b, self.R
        return a + (r - a) * ((b - a) * (R - a)) / self._denominator(r)

    def eta_prime(self, r):
        a, b, R = self.a, self.b, self.R
        return (R - a) ** 2 * (b - a) ** 2 / self._denominator(r) ** 2

    def eta_second(self, r):
        a, b, R = self.a, self.b, self.R
        return 2.0 * (R - a) ** 2 * (b - a) ** 2 * (R - b) / self._denominator(r) ** 3

    def _check_radius(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0) or np.any(r > self.b) or np.any(~np.isfinite(r)):
            bad = r[(r < 0.0) | (r > self.b) | ~np.isfinite(r)]
            raise MapDomainError(f"radius {bad.flat[0]!r} outside [0, {self.b}]")
        return r

    def zeta(self, r):
        r = self._check_radius(r)
        inner = r < self.a
        # eta evaluated only where needed keeps r = 0 away from the rational branch.
        safe = np.where(inner, self.b, r)
        return np.where(inner, r, self.eta(safe))

    def zeta_prime(self, r):
        r = self._check_radius(r)
        inner = r < self.a
        safe = np.where(inner, self.b, r)
        return np.where(inner, 1.0, self.eta_prime(safe))

    def zeta_second(self, r):
        r = self._check_radius(r)
        inner = r < self.a
        safe = np.where(inner, self.b, r)
        return np.where(inner, 0.0, self.eta_second(safe))


@dataclass(frozen=True)
class IdentityMap:
    """``zeta(r) = r`` on ``[0, radius]``; used for direct (uncompressed) solves."""

    radius: float
    dimension: int = 2

    @property
    def a(self) -> float:
        return self.radius

    @property
    def b(self) -> float:
        return self.radius

    @property
    def R(self) -> float:
        return self.radius

    @property
    def outer_radius(self) -> float:
        return self.radius

    def _check_radius(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0) or np.any(r > self.radius):
            bad = r[(r < 0.0) | (r > self.radius)]
            raise MapDomainError(f"radius {bad.flat[0]!r} outside [0, {self.radius}]")
        return r

    def zeta(self, r):
        return self._check_radius(r).copy()

    def zeta_prime(self, r):
        return np.ones_like(self._check_radius(r))

    def zeta_second(self, r):
        return np.zeros_like(self._check_radius(r))


def eval_map(rmap, r):
    """Return ``(zeta(r), zeta'(r))``; scalars in, scalars out."""
    z = rmap.zeta(r)
    zp = rmap.zeta_prime(r)
    if np.ndim(z) == 0:
        return float(z), float(zp)
    return z, zp


@dataclass(frozen=True)
class TransformedCoefficients:
    """Coefficient fields at one or more points.

    ``beta`` has shape ``s``; ``M``, ``K`` and ``Q`` have shape ``s + (d, d)``.
    """

    beta: np.ndarray
    M: np.ndarray
    K: np.ndarray
    Q: np.ndarray

    @property
    def dimension(self) -> int:
        return self.Q.shape[-1]


def rotation_2d(theta):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def spherical_frame(theta, phi):
    """Columns are ``e_r, e_theta, e_phi`` for polar angle ``theta`` and azimuth ``phi``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    rows = [
        np.stack([st * cp, ct * cp, -sp], -1),
        np.stack([st * sp, ct * sp, cp], -1),
        np.stack([ct, -st, np.zeros_like(st)], -1),
    ]
    return np.stack(rows, -2)


def _frame_product(Q, diag):
    # Q diag(d) Q^T for stacked frames.
    return np.einsum("...ik,...k,...jk->...ij", Q, diag, Q)


def _split_identity(rmap, r):
    r = rmap._check_radius(r)
    inner = r <= rmap.a
    safe = np.where(inner, rmap.b, r)
    z = np.where(inner, safe, rmap.zeta(safe))
    zp = rmap.zeta_prime(safe)
    return r, inner, safe, z, zp


def coefficients_2d(rmap, r, theta) -> TransformedCoefficients:
    """Coefficients in polar coordinates ``(r, theta)``.

    ``beta = zeta zeta'/r``, ``M = Q diag(zeta/(r zeta'), r zeta'/zeta) Q^T`` and
    ``K = Q diag(zeta/r, zeta') Q^T``.  For ``r <= a`` the exact identity values
    are returned without forming the polar expressions, so ``r = 0`` is fine.
    """
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    r, inner, safe, z, zp = _split_identity(rmap, r)
    Q = rotation_2d(theta)
    beta = np.where(inner, 1.0, z * zp / safe)
    m_diag = np.stack([z / (safe * zp), safe * zp / z], -1)
    k_diag = np.stack([z / safe, zp], -1)
    eye = np.broadcast_to(np.eye(2), r.shape + (2, 2))
    M = np.where(inner[..., None, None], eye, _frame_product(Q, m_diag))
    K = np.where(inner[..., None, None], eye, _frame_product(Q, k_diag))
    return TransformedCoefficients(beta=beta, M=M, K=K, Q=Q)


def coefficients_3d(rmap, r, theta, phi) -> TransformedCoefficients:
    """Coefficients in spherical coordinates ``(r, theta, phi)``.

    ``beta = zeta^2 zeta'/r^2`` (the Jacobian of ``x -> zeta(|x|) x/|x|``),
    ``M = Q diag(zeta^2/(r^2 zeta'), zeta', zeta') Q^T`` and
    ``K = Q diag(zeta^2/r^2, zeta zeta'/r, zeta zeta'/r) Q^T``.  No division by
    ``sin(theta)`` happens here, so the polar axis is harmless.
    """
    r, theta, phi = np.broadcast_arrays(
        np.asarray(r, float), np.asarray(theta, float), np.asarray(phi, float)
    )
    r, inner, safe, z, zp = _split_identity(rmap, r)
    Q = spherical_frame(theta, phi)
    beta = np.where(inner, 1.0, z * z * zp / (safe * safe))
    m_diag = np.stack([z * z / (safe * safe * zp), zp, zp], -1)
    k_diag = np.stack([z * z / (safe * safe), z * zp / safe, z * zp / safe], -1)
    eye = np.broadcast_to(np.eye(3), r.shape + (3, 3))
    M = np.where(inner[..., None, None], eye, _frame_product(Q, m_diag))
    K = np.where(inner[..., None, None], eye, _frame_product(Q, k_diag))
    return TransformedCoefficients(beta=beta, M=M, K=K, Q=Q)


def coefficients_at(rmap, points) -> TransformedCoefficients:
    """Coefficients at Cartesian points of shape ``(..., d)`` in the compressed domain."""
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    r = np.linalg.norm(points, axis=-1)
    if d == 2:
        theta = np.arctan2(points[..., 1], points[..., 0])
        return coefficients_2d(rmap, r, theta)
    if d == 3:
        safe = np.where(r > 0.0, r, 1.0)
        theta = np.arccos(np.clip(points[..., 2] / safe, -1.0, 1.0))
        phi = np.arctan2(points[..., 1], points[..., 0])
        return coefficients_3d(rmap, r, theta, phi)
    raise MapDomainError(f"points must be 2D or 3D, got trailing dimension {d}")


def physical_point(rmap, points):
    """Image ``zeta(|y|) y/|y|`` of compressed points ``y``."""
    points = np.asarray(points, dtype=float)
    r = np.linalg.norm(points, axis=-1)
    scale = np.where(r > 0.0, rmap.zeta(r) / np.where(r > 0.0, r, 1.0), 1.0)
    return points * scale[..., None]


# -- finite-difference checks of the pullback identities ------------------------------


def default_step(rmap) -> float:
    return 1e-4 * (rmap.b - rmap.a)


def _check_samples(rmap, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != rmap.dimension:
        raise MapDomainError(
            f"sample points have dimension {points.shape[-1]}, map has {rmap.dimension}"
        )
    r = np.linalg.norm(points, axis=-1)
    if np.any(r <= 0.0) or np.any(r >= rmap.b):
        bad = np.flatnonzero((r <= 0.0) | (r >= rmap.b))[0]
        raise MapDomainError(f"sample point {bad} at radius {r[bad]} outside (0, {rmap.b})")
    return points


def _fd_laplacian(func, points, h):
    eye = np.eye(points.shape[-1])
    centre = func(points)
    total = np.zeros(points.shape[:-1])
    for e in eye:
        total += func(points + h * e) - 2.0 * centre + func(points - h * e)
    return total / (h * h)


def _fd_gradient(func, points, h):
    eye = np.eye(points.shape[-1])
    return np.stack([(func(points + h * e) - func(points - h * e)) / (2.0 * h) for e in eye], -1)


def _relative_discrepancy(lhs, rhs) -> float:
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs)) / scale)


def pulled_back(rmap, field: Callable) -> Callable:
    """``v(y) = u(zeta(|y|) y/|y|)`` for a field ``u`` of physical coordinates."""
    return lambda y: field(physical_point(rmap, y))


def laplacian_pullback_sides(rmap, test_field: Callable, sample_points, h: float | None = None):
    """Both sides of ``Lap_rho u = beta^-1 div_r(M grad_r v)`` by central differences.

    ``test_field`` maps an array of physical points ``(..., d)`` to values ``(...)``.
    Returns ``(lhs, rhs)`` at the sample points (given in compressed coordinates).
    """
    points = _check_samples(rmap, sample_points)
    h = default_step(rmap) if h is None else float(h)
    v = pulled_back(rmap, test_field)
    lhs = _fd_laplacian(test_field, physical_point(rmap, points), h)

    eye = np.eye(points.shape[-1])
    div = np.zeros(points.shape[:-1])
    for k, e in enumerate(eye):
        for sign in (1.0, -1.0):
            shifted = points + sign * h * e
            flux = np.einsum("...ij,...j->...i", coefficients_at(rmap, shifted).M,
                             _fd_gradient(v, shifted, h))
            div += sign * flux[..., k]
    div /= 2.0 * h
    rhs = div / coefficients_at(rmap, points).beta
    return lhs, rhs


def verify_laplacian_pullback(rmap, test_field: Callable, sample_points, h: float | None = None) -> float:
    """Max discrepancy between the two sides of the Laplacian pullback identity.

    The discrepancy is normalised by the largest magnitude of either side over the
    samples; identically vanishing sides give 0.
    """
    lhs, rhs = laplacian_pullback_sides(rmap, test_field, sample_points, h)
    return _relative_discrepancy(lhs, rhs)


def verify_gradient_pullback(rmap, test_field: Callable, sample_points, h: float | None = None) -> float:
    """Check ``grad_rho u = Q diag(1/zeta', r/zeta, ...) Q^T grad_r v``."""
    points = _check_samples(rmap, sample_points)
    h = default_step(rmap) if h is None else float(h)
    lhs = _fd_gradient(test_field, physical_point(rmap, points), h)
    grad_v = _fd_gradient(pulled_back(rmap, test_field), points, h)
    r = np.linalg.norm(points, axis=-1)
    z, zp = rmap.zeta(r), rmap.zeta_prime(r)
    Q = coefficients_at(rmap, points).Q
    tangential = r / z
    diag = np.concatenate(
        [(1.0 / zp)[..., None], np.repeat(tangential[..., None], points.shape[-1] - 1, -1)], -1
    )
    rhs = np.einsum("...ij,...j->...i", _frame_product(Q, diag), grad_v)
    return _relative_discrepancy(lhs, rhs)


def verify_divergence_pullback(rmap, vector_field: Callable, sample_points, h: float | None = None) -> float:
    """Check ``div_rho u = beta^-1 div_r(K v)`` for a vector field of physical coordinates."""
    points = _check_samples(rmap, sample_points)
    h = default_step(rmap) if h is None else float(h)
    d = points.shape[-1]
    eye = np.eye(d)
    xs = physical_point(rmap, points)
    lhs = sum((vector_field(xs + h * e)[..., k] - vector_field(xs - h * e)[..., k]) / (2.0 * h)
              for k, e in enumerate(eye))

    def weighted(y):
        return np.einsum("...ij,...j->...i", coefficients_at(rmap, y).K,
                         vector_field(physical_point(rmap, y)))

    div = sum((weighted(points + h * e)[..., k] - weighted(points - h * e)[..., k]) / (2.0 * h)
              for k, e in enumerate(eye))
    rhs = div / coefficients_at(rmap, points).beta
    return _relative_discrepancy(lhs, rhs)


def sample_annulus(rmap, n: int, rng: np.random.Generator, margin: float | None = None,
                   min_sin_theta: float = 0.1):
    """Random points with ``a + margin < r < b - margin``.

    In 3D the polar angle is restricted to ``sin(theta) >= min_sin_theta``.
    """
    margin = 0.02 * (rmap.b - rmap.a) if margin is None else margin
    r = rng.uniform(rmap.a + margin, rmap.b - margin, n)
    if rmap.dimension == 2:
        t = rng.uniform(0.0, 2.0 * np.pi, n)
        return np.stack([r * np.cos(t), r * np.sin(t)], -1)
    lo = np.arcsin(min_sin_theta)
    theta = rng.uniform(lo, np.pi - lo, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return r[:, None] * np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], -1
    )
