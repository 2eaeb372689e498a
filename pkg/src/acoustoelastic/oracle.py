"""Independent reference computations.

* manufactured solutions for the transformed acoustic equation coupled to the
  elastic disk (sources derived symbolically with sympy),
* a tensor-product polar quadrature that never sees the finite element mesh,
* the direct solve on the large disk ``B_R`` with the identity map, used to
  test the compressed reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy

from .assembly import AssembledSystem, MaterialParams, assemble_system
from .diagnostics import ProbeSampler
from .mesh import Region, fluid_layers, generate_disk_annulus
from .radial_map import IdentityMap, RadialMap, coefficients_at
from .timestepper import (ConfigurationError, TimeGrid, bump, default_dt, incident_wave_scenario,
                          initial_state, run)

# -- manufactured solutions -----------------------------------------------------------------

CATALOG = ("zero", "bubble", "dipole", "coupled")


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form fields and the data that make them exact solutions.

    All callables take compressed-coordinate points of shape ``(..., 2)`` and,
    where time-dependent, ``t``.  ``interface_acoustic`` and
    ``interface_elastic`` take ``(points, normals, t)`` and carry the mismatch of
    the exact fields in the interface conditions (zero for fields that satisfy
    them).  ``elastic_source`` is the body force density per unit ``rho1``.
    """

    name: str
    p_exact: Callable
    u_exact: Callable
    f: Callable
    g: Callable
    h: Callable
    elastic_source: Callable
    interface_acoustic: Callable
    interface_elastic: Callable
    operator_symbolic: Callable = field(repr=False)

    def load_function(self, sys: AssembledSystem) -> Callable:
        """``F(t)`` including the volume source, body force and interface data."""
        params = sys.params
        body = _ElasticBodyLoad(sys)

        def load(t):
            F = sys.volume_load(self.f, t)
            F += sys.interface_load(t, acoustic=self.interface_acoustic, elastic=self.interface_elastic)
            F += params.rho1 * body(self.elastic_source, t)
            return F

        return load


class _ElasticBodyLoad:
    """``int_D b(x, t) . W_j dx`` over elastic unknowns (7-point rule)."""

    def __init__(self, sys: AssembledSystem):
        from .quadrature import TRI7

        mesh, dofs = sys.mesh, sys.dof_map
        cells = mesh.cells_in(Region.ELASTIC)
        p = mesh.vertices[cells]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        self.points = TRI7.points(p)
        self.weights = TRI7.weights[None, :] * area[:, None]
        self.bary = TRI7.bary
        self.index = dofs.elastic_lookup[cells]
        self.dofs = dofs

    def __call__(self, b: Callable, t: float) -> np.ndarray:
        vals = np.asarray(b(self.points, t), float)
        local = np.einsum("mqc,mq,qk->mkc", vals, self.weights, self.bary)
        idx = 2 * self.index[:, :, None] + np.arange(2)
        out = np.zeros(self.dofs.n_total)
        out[self.dofs.elastic_slice] = np.bincount(idx.ravel(), weights=local.ravel(),
                                                   minlength=self.dofs.n_elastic)
        return out


def _catalog_fields(choice, x, y, t, b, omega):
    r2 = x ** 2 + y ** 2
    zero = sympy.Integer(0)
    if choice == "zero":
        return zero, (zero, zero)
    if choice == "bubble":
        return sympy.sin(omega * t) * (b ** 2 - r2), (zero, zero)
    if choice == "dipole":
        return sympy.sin(omega * t) * x * (b ** 2 - r2), (zero, zero)
    if choice == "coupled":
        p = sympy.sin(omega * t) * (x + y / 2) * (b ** 2 - r2)
        s = 1 - sympy.cos(omega * t)
        return p, (s * (x ** 2 - y ** 2) / 5, s * x * y / 4)
    raise ConfigurationError(f"unknown manufactured case {choice!r}; choose from {', '.join(CATALOG)}")


def _transformed_operator(p, rmap, x, y):
    """``div(M grad p)`` and ``beta`` for ``r >= a`` in Cartesian symbols."""
    r, th = sympy.symbols("r theta", positive=True)
    a, b, R = (sympy.nsimplify(v) for v in (rmap.a, rmap.b, rmap.R))
    den = (b - r) * (R - b) + (b - a) ** 2
    zeta = (a ** 2 * (R - b) + r * (a ** 2 + (b - 2 * a) * R)) / den
    zp = sympy.diff(zeta, r)
    pp = p.subs({x: r * sympy.cos(th), y: r * sympy.sin(th)}, simultaneous=True)
    div = sympy.diff(zeta / zp * sympy.diff(pp, r), r) / r + zp / (r * zeta) * sympy.diff(pp, th, 2)
    beta = zeta * zp / r
    back = {r: sympy.sqrt(x ** 2 + y ** 2), th: sympy.atan2(y, x)}
    return div.subs(back, simultaneous=True), beta.subs(back, simultaneous=True)


def _vectorize(expr, args):
    fn = sympy.lambdify(args, expr, "numpy")

    def call(*vals):
        out = fn(*vals)
        return np.broadcast_to(np.asarray(out, float), np.broadcast(*vals).shape).copy()

    return call


def make_manufactured(rmap, params: MaterialParams, choice: str, omega: float = 2.0,
                      validate: bool = True, seed: int = 0) -> ManufacturedCase:
    """Build a catalog case; ``f`` applies the transformed operator to ``p_exact``.

    Catalog: ``zero``; ``bubble`` ``sin(wt)(b^2 - r^2)``; ``dipole``
    ``sin(wt) x (b^2 - r^2)``; ``coupled`` ``sin(wt)(x + y/2)(b^2 - r^2)`` with
    a nonzero displacement ``(1 - cos wt)((x^2 - y^2)/5, xy/4)``.
    """
    x, y, t = sympy.symbols("x y t", real=True)
    b_sym = sympy.nsimplify(rmap.b)
    p, u = _catalog_fields(choice, x, y, t, b_sym, sympy.nsimplify(omega))
    c2 = sympy.nsimplify(params.c) ** 2
    lam, mu, rho1, rho2 = (sympy.nsimplify(v) for v in (params.lam, params.mu, params.rho1, params.rho2))

    p_tt = sympy.diff(p, t, 2)
    f_inner = p_tt / c2 - (sympy.diff(p, x, 2) + sympy.diff(p, y, 2))
    if isinstance(rmap, IdentityMap) or choice == "zero":
        f_outer, div_outer = f_inner, sympy.diff(p, x, 2) + sympy.diff(p, y, 2)
    else:
        div_outer, beta_outer = _transformed_operator(p, rmap, x, y)
        f_outer = beta_outer * p_tt / c2 - div_outer
    div_inner = sympy.diff(p, x, 2) + sympy.diff(p, y, 2)

    ux, uy = u
    div_u = sympy.diff(ux, x) + sympy.diff(uy, y)
    body = [rho2 * sympy.diff(comp, t, 2) - mu * (sympy.diff(comp, x, 2) + sympy.diff(comp, y, 2))
            - (lam + mu) * sympy.diff(div_u, var) for comp, var in ((ux, x), (uy, y))]
    grad_u = [[sympy.diff(comp, var) for var in (x, y)] for comp in (ux, uy)]
    u_tt = [sympy.diff(comp, t, 2) for comp in (ux, uy)]
    p_grad = [sympy.diff(p, x), sympy.diff(p, y)]

    args = (x, y, t)
    fi, fo = _vectorize(f_inner, args), _vectorize(f_outer, args)
    di, do = _vectorize(div_inner, args), _vectorize(div_outer, args)
    p_fn = _vectorize(p, args)
    p_t_fn = _vectorize(sympy.diff(p, t), args)
    u_fns = [_vectorize(comp, args) for comp in (ux, uy)]
    body_fns = [_vectorize(e, args) for e in body]
    grad_fns = [[_vectorize(e, args) for e in row] for row in grad_u]
    utt_fns = [_vectorize(e, args) for e in u_tt]
    pg_fns = [_vectorize(e, args) for e in p_grad]
    divu_fn = _vectorize(div_u, args)
    a = rmap.a

    def split(points):
        pts = np.asarray(points, float)
        return pts[..., 0], pts[..., 1], np.hypot(pts[..., 0], pts[..., 1])

    def f(points, tt):
        X, Y, r = split(points)
        return np.where(r < a, fi(X, Y, tt), fo(X, Y, tt))

    def operator(points, tt):
        X, Y, r = split(points)
        return np.where(r < a, di(X, Y, tt), do(X, Y, tt))

    def p_exact(points, tt):
        X, Y, _ = split(points)
        return p_fn(X, Y, tt)

    def u_exact(points, tt):
        X, Y, _ = split(points)
        return np.stack([fn(X, Y, tt) for fn in u_fns], -1)

    def g(points):
        return p_exact(points, 0.0)

    def h(points):
        X, Y, _ = split(points)
        return p_t_fn(X, Y, 0.0)

    def elastic_source(points, tt):
        X, Y, _ = split(points)
        return np.stack([fn(X, Y, tt) for fn in body_fns], -1)

    def interface_acoustic(points, normals, tt):
        X, Y, _ = split(points)
        dpdn = pg_fns[0](X, Y, tt) * normals[..., 0] + pg_fns[1](X, Y, tt) * normals[..., 1]
        n_utt = utt_fns[0](X, Y, tt) * normals[..., 0] + utt_fns[1](X, Y, tt) * normals[..., 1]
        return -(dpdn + params.rho1 * n_utt)

    def interface_elastic(points, normals, tt):
        X, Y, _ = split(points)
        G = np.stack([np.stack([fn(X, Y, tt) for fn in row], -1) for row in grad_fns], -2)
        dudn = np.einsum("...ij,...j->...i", G, normals)
        traction = params.mu * dudn + (params.lam + params.mu) * divu_fn(X, Y, tt)[..., None] * normals
        return params.rho1 * (traction + p_exact(points, tt)[..., None] * normals)

    case = ManufacturedCase(choice, p_exact, u_exact, f, g, h, elastic_source,
                            interface_acoustic, interface_elastic, operator)
    if validate and choice != "zero":
        err = validate_operator(case, rmap, seed=seed)
        if err > 1e-6:
            raise RuntimeError(f"manufactured operator for {choice!r} disagrees with FD oracle: {err:.3e}")
    return case


def fd_operator(rmap, field_fn: Callable, points, h: float) -> np.ndarray:
    """``div(M grad v)`` by nested central differences with ``M`` from the map."""
    pts = np.asarray(points, float)
    d = pts.shape[-1]
    eye = np.eye(d) * h

    def flux(q):
        grad = np.stack([(field_fn(q + eye[i]) - field_fn(q - eye[i])) / (2 * h) for i in range(d)], -1)
        return np.einsum("...ij,...j->...i", coefficients_at(rmap, q).M, grad)

    return sum((flux(pts + eye[i])[..., i] - flux(pts - eye[i])[..., i]) / (2 * h) for i in range(d))


def validate_operator(case: ManufacturedCase, rmap, n_points: int = 100, t: float = 0.37,
                      seed: int = 0, h: float | None = None) -> float:
    """Max relative gap between the symbolic ``div(M grad p)`` and :func:`fd_operator`.

    Samples avoid a band around ``r = a`` where ``M`` is only continuous.
    """
    rng = np.random.default_rng(seed)
    if h is None:
        h = 1e-4 * ((rmap.b - rmap.a) if rmap.b > rmap.a else rmap.b)
    lo, hi = 0.05 * rmap.b, rmap.b - 4 * h
    r = rng.uniform(lo, hi, 4 * n_points)
    r = r[np.abs(r - rmap.a) > 4 * h][:n_points]
    th = rng.uniform(0.0, 2.0 * np.pi, len(r))
    pts = np.stack([r * np.cos(th), r * np.sin(th)], -1)
    exact = case.operator_symbolic(pts, t)
    approx = fd_operator(rmap, lambda q: case.p_exact(q, t), pts, h)
    scale = max(np.max(np.abs(exact)), np.max(np.abs(approx)))
    return 0.0 if scale == 0.0 else float(np.max(np.abs(exact - approx)) / scale)


def l2_error(sys: AssembledSystem, y, exact: Callable, t: float) -> float:
    """``|p_h - p|_{L2(Omega)}`` with P1 ``p_h`` (zero on the outer circle), 7-point rule."""
    from .quadrature import TRI7

    mesh, dofs = sys.mesh, sys.dof_map
    nodal = dofs.acoustic_to_vertices(y)
    cells = mesh.cells_in(Region.FLUID)
    p = mesh.vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    ph = nodal[cells] @ TRI7.bary.T
    pe = exact(TRI7.points(p), t)
    return float(np.sqrt(np.sum(TRI7.weights[None, :] * area[:, None] * (ph - pe) ** 2)))


# -- reference quadrature -------------------------------------------------------------------


def reference_integral(field_fn: Callable, region: str, order: int, r_D: float, b: float,
                       n_panels: int = 64, n_theta: int = 512) -> float:
    """Integral over the exact annulus ``r_D < r < b`` (``"omega"``), disk (``"D"``) or circle (``"dD"``).

    Polar tensor grid: Gauss-Legendre on ``n_panels`` radial panels with
    ``(order + 1) // 2`` points each (exact for radial polynomials of degree
    ``order``, error ``O(n_panels^-(order + 1))`` for smooth integrands) and the
    trapezoid rule in angle (spectrally accurate for smooth periodic
    integrands).  ``field_fn`` takes points of shape ``(..., 2)``.
    """
    if order not in (5, 7):
        raise ValueError(f"order must be 5 or 7, got {order}")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ring = np.stack([np.cos(theta), np.sin(theta)], -1)
    if region == "dD":
        vals = np.broadcast_to(np.asarray(field_fn(r_D * ring), float), theta.shape)
        return float(vals.sum() * 2.0 * np.pi * r_D / n_theta)
    if region == "omega":
        r0, r1 = r_D, b
    elif region == "D":
        r0, r1 = 0.0, r_D
    else:
        raise ValueError(f"unknown region {region!r}")
    xg, wg = np.polynomial.legendre.leggauss((order + 1) // 2)
    edges = np.linspace(r0, r1, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    pts = r[:, None, None] * ring[None, :, :]
    vals = np.broadcast_to(np.asarray(field_fn(pts), float), pts.shape[:-1])
    return float(np.sum(w[:, None] * r[:, None] * vals) * 2.0 * np.pi / n_theta)


# -- scattering runs and the direct big-domain solve ----------------------------------------


@dataclass(frozen=True)
class ScatteringSetup:
    """Plane-pulse scattering by an elastic disk of radius ``r_D``."""

    r_D: float = 0.5
    a: float = 1.0
    b: float = 2.0
    R: float = 6.0
    params: MaterialParams = MaterialParams(c=1.0, rho1=1.0, rho2=7.8, mu=37.7, lam=49.6)
    direction: tuple = (1.0, 0.0)
    width: float = 1.0
    delay: float | None = None
    amplitude: float = 1.0
    T: float = 4.0
    n_radial: int = 48
    n_angular: int = 192
    dt_factor: float = 0.2
    probes: tuple = ((0.625, 0.0), (0.8125, 0.0), (1.0, 0.0))

    def compressed_map(self):
        return RadialMap(self.a, self.b, self.R)

    def scenario(self, rmap):
        # Delay tied to the physical a, not the map, so compressed and direct runs agree.
        delay = self.a / self.params.c if self.delay is None else self.delay
        return incident_wave_scenario(bump, self.direction, self.params, rmap, width=self.width,
                                      delay=delay, amplitude=self.amplitude,
                                      obstacle_radius=self.r_D)


@dataclass
class ProbeSeries:
    times: np.ndarray
    values: np.ndarray
    points: np.ndarray
    n_dofs: int = 0
    dt: float = 0.0


def _scatter_run(setup: ScatteringSetup, mesh, rmap, dt: float) -> ProbeSeries:
    sys = assemble_system(mesh, rmap, setup.params)
    scen = setup.scenario(rmap)
    probes = ProbeSampler(sys, np.asarray(setup.probes, float))
    grid = TimeGrid.covering(setup.T, dt)
    run(sys, initial_state(sys), grid, scen.load_function(sys), [probes])
    t, v = probes.result
    return ProbeSeries(t, v, probes.points, sys.dof_map.n_total, grid.dt)


def compressed_mesh(setup: ScatteringSetup, level: int = 0):
    k = 2 ** level
    return generate_disk_annulus(setup.r_D, setup.a, setup.b, setup.n_radial * k, setup.n_angular * k)


def matched_direct_radial(setup: ScatteringSetup, level: int = 0) -> int:
    """Layer count on ``[r_D, R]`` reproducing the compressed mesh inside ``r <= a``."""
    n_rad = setup.n_radial * 2 ** level
    n_in, n_out = fluid_layers(setup.r_D, setup.a, setup.b, n_rad)
    dr = (setup.b - setup.a) / n_out
    target = n_in + int(round((setup.R - setup.a) / dr))
    for cand in range(target - 3, target + 4):
        if fluid_layers(setup.r_D, setup.a, setup.R, cand)[0] == n_in:
            if abs(cand - target) <= 3:
                return cand
    raise ConfigurationError("cannot match inner resolution of the direct mesh")


def direct_mesh(setup: ScatteringSetup, level: int = 0):
    return generate_disk_annulus(setup.r_D, setup.a, setup.R, matched_direct_radial(setup, level),
                                 setup.n_angular * 2 ** level)


def check_direct_causality(setup: ScatteringSetup) -> None:
    c = setup.params.c
    if not setup.R > setup.a + c * setup.T + setup.width:
        raise ConfigurationError(
            f"R = {setup.R} too small: need R > a + c T + width = {setup.a + c * setup.T + setup.width}"
        )


def shared_dt(setup: ScatteringSetup, level: int = 0) -> float:
    """Common step for the compressed and direct runs (the smaller default)."""
    meshes = (compressed_mesh(setup, level), direct_mesh(setup, level))
    return min(default_dt(m, setup.params, setup.dt_factor) for m in meshes)


def solve_compressed(setup: ScatteringSetup, level: int = 0, dt: float | None = None) -> ProbeSeries:
    mesh = compressed_mesh(setup, level)
    dt = default_dt(mesh, setup.params, setup.dt_factor) if dt is None else dt
    return _scatter_run(setup, mesh, setup.compressed_map(), dt)


def direct_big_domain_solve(setup: ScatteringSetup, R: float | None = None, level: int = 0,
                            dt: float | None = None) -> ProbeSeries:
    """Same scattering problem on ``B_R`` with the identity map.

    Probes must lie in ``r <= a``.  The mesh matches the compressed mesh inside
    ``r <= a``.
    """
    if R is not None:
        setup = ScatteringSetup(**{**setup.__dict__, "R": R})
    check_direct_causality(setup)
    if np.any(np.linalg.norm(np.asarray(setup.probes, float), axis=1) > setup.a * (1 + 1e-12)):
        raise ConfigurationError("probes must lie in r <= a")
    mesh = direct_mesh(setup, level)
    dt = default_dt(mesh, setup.params, setup.dt_factor) if dt is None else dt
    return _scatter_run(setup, mesh, IdentityMap(setup.R), dt)


def probe_difference(a: ProbeSeries, b: ProbeSeries) -> np.ndarray:
    """Probe-wise relative L2(0, T) difference ``|a - b| / |b|`` (trapezoid in time)."""
    if a.values.shape != b.values.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("probe series sampled differently")
    t = a.times
    w = np.diff(t)

    def norm2(v):
        sq = v ** 2
        return np.sum(0.5 * (sq[1:] + sq[:-1]) * w[:, None], axis=0)

    den = norm2(b.values)
    return np.sqrt(norm2(a.values - b.values) / np.where(den > 0.0, den, 1.0))


__all__ = [
    "CATALOG", "ManufacturedCase", "make_manufactured", "fd_operator", "validate_operator", "l2_error",
    "reference_integral", "ScatteringSetup", "ProbeSeries", "solve_compressed",
    "direct_big_domain_solve", "probe_difference", "shared_dt", "check_direct_causality",
    "compressed_mesh", "direct_mesh", "matched_direct_radial",
]
