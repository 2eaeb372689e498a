"""Average-acceleration Newmark integration of ``A U'' + B U = F(t)``.

One step with ``beta_N = 1/4, gamma_N = 1/2``::

    U* = U + dt V + dt^2/4 W
    (A + dt^2/4 B) W+ = F(t + dt) - B U*
    U+ = U* + dt^2/4 W+,   V+ = V + dt/2 (W + W+)

The effective matrix is factorized once per (system, dt) by sparse LU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem, MaterialParams
from .mesh import Mesh


class SolverError(RuntimeError):
    """Factorization or solve failure."""


class ConfigurationError(ValueError):
    """Invalid scenario or run parameters."""


@dataclass
class StateVector:
    """Unknowns ``U``, first derivative ``V``, second derivative ``W`` at time ``t``."""

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray | None = None
    t: float = 0.0

    @classmethod
    def zeros(cls, n: int, t: float = 0.0) -> "StateVector":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), t)

    def copy(self) -> "StateVector":
        W = None if self.W is None else self.W.copy()
        return StateVector(self.U.copy(), self.V.copy(), W, self.t)

    def scaled(self, alpha: float) -> "StateVector":
        W = None if self.W is None else alpha * self.W
        return StateVector(alpha * self.U, alpha * self.V, W, self.t)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    @classmethod
    def covering(cls, T: float, dt_max: float) -> "TimeGrid":
        """Smallest uniform grid on ``[0, T]`` with step at most ``dt_max``."""
        if not (T > 0.0):
            raise ConfigurationError(f"final time must be positive, got {T}")
        n = max(1, math.ceil(T / dt_max - 1e-9))
        return cls(T / n, n)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def halved(self) -> "TimeGrid":
        return TimeGrid(self.dt / 2.0, 2 * self.n_steps)


def default_dt(mesh: Mesh, params: MaterialParams, factor: float = 0.2) -> float:
    """``factor * h / c`` with ``h`` the shortest mesh edge."""
    return factor * mesh.min_edge_length / params.c


class NewmarkSolver:
    """Factorized effective matrix ``A + dt^2/4 B`` for one step size."""

    def __init__(self, A, B, dt: float):
        self.A = sp.csr_matrix(A)
        self.B = sp.csr_matrix(B)
        self.dt = float(dt)
        self._lu = self._factor(self.A + 0.25 * self.dt ** 2 * self.B, "effective matrix")
        self._lu_mass = None

    @staticmethod
    def _factor(mat, what):
        try:
            lu = spla.splu(sp.csc_matrix(mat))
        except RuntimeError as exc:
            raise SolverError(f"{what} is singular ({exc}); smallest pivot 0") from exc
        pivots = np.abs(lu.U.diagonal())
        if pivots.min() <= 1e-14 * pivots.max():
            raise SolverError(f"{what} is numerically singular: smallest pivot {pivots.min():.3e}")
        return lu

    def initial_acceleration(self, U0, F0) -> np.ndarray:
        """Solve ``A W0 = F0 - B U0``."""
        if self._lu_mass is None:
            self._lu_mass = self._factor(self.A, "mass matrix A")
        return self._lu_mass.solve(np.asarray(F0, float) - self.B @ U0)

    def step(self, state: StateVector, F_next) -> StateVector:
        dt = self.dt
        q = 0.25 * dt * dt
        U_star = state.U + dt * state.V + q * state.W
        W_new = self._lu.solve(np.asarray(F_next, float) - self.B @ U_star)
        U_new = U_star + q * W_new
        V_new = state.V + 0.5 * dt * (state.W + W_new)
        return StateVector(U_new, V_new, W_new, state.t + dt)


def _zero_load(n):
    zero = np.zeros(n)
    return lambda t: zero


def newmark_step(sys: AssembledSystem, state: StateVector, grid: TimeGrid,
                 load_at: Callable | None = None, solver: NewmarkSolver | None = None) -> StateVector:
    """Advance ``state`` by one step of ``grid.dt``.

    Pass a ``solver`` built for the same ``dt`` to reuse its factorization.
    """
    solver = NewmarkSolver(sys.A, sys.B, grid.dt) if solver is None else solver
    load_at = _zero_load(sys.dof_map.n_total) if load_at is None else load_at
    if state.W is None:
        state = replace(state, W=solver.initial_acceleration(state.U, load_at(state.t)))
    return solver.step(state, load_at(state.t + grid.dt))


def initial_state(sys: AssembledSystem, g: Callable | None = None, h: Callable | None = None,
                  t0: float = 0.0) -> StateVector:
    """Acoustic block from the nodal interpolants of ``g`` and ``h``; elastic block zero.

    ``W`` is left unset; :func:`run` computes it from the equation.
    """
    dofs = sys.dof_map
    pts = sys.mesh.vertices[dofs.acoustic_vertices]
    U, V = np.zeros(dofs.n_total), np.zeros(dofs.n_total)
    if g is not None:
        U[dofs.acoustic_slice] = np.broadcast_to(g(pts), dofs.n_acoustic)
    if h is not None:
        V[dofs.acoustic_slice] = np.broadcast_to(h(pts), dofs.n_acoustic)
    return StateVector(U, V, None, t0)


@dataclass
class RunResult:
    final: StateVector
    outputs: list
    solver: NewmarkSolver = field(repr=False)


def run(sys: AssembledSystem, initial: StateVector, grid: TimeGrid, load_at: Callable | None = None,
        observers: Sequence = (), solver: NewmarkSolver | None = None) -> RunResult:
    """Integrate over ``grid``, calling each observer every ``observer.stride`` steps.

    Observers are callables ``obs(step_index, state)``; an optional ``stride``
    attribute (default 1) controls the cadence, and step 0 and the final step
    are always observed.  ``obs.result`` (if present) is collected into
    ``RunResult.outputs``.
    """
    n = sys.dof_map.n_total
    if initial.U.shape != (n,) or initial.V.shape != (n,):
        raise ConfigurationError(f"initial state length does not match {n} unknowns")
    solver = NewmarkSolver(sys.A, sys.B, grid.dt) if solver is None else solver
    if abs(solver.dt - grid.dt) > 1e-14 * grid.dt:
        raise ConfigurationError("solver was factorized for a different dt")
    load_at = _zero_load(n) if load_at is None else load_at

    state = initial.copy()
    t0 = state.t
    if state.W is None:
        state.W = solver.initial_acceleration(state.U, load_at(t0))

    def notify(k, st):
        for obs in observers:
            stride = getattr(obs, "stride", 1)
            if k % stride == 0 or k == grid.n_steps:
                try:
                    obs(k, st)
                except OSError as exc:
                    raise RuntimeError(f"observer {type(obs).__name__} failed at step {k}: {exc}") from exc

    notify(0, state)
    for k in range(1, grid.n_steps + 1):
        t_next = t0 + k * grid.dt
        state = solver.step(state, load_at(t_next))
        state.t = t_next
        notify(k, state)
    return RunResult(state, [getattr(obs, "result", None) for obs in observers], solver)


# -- incident plane wave ------------------------------------------------------------------


def bump(s):
    """Unit-peak ``256 s^4 (1 - s)^4`` on ``[0, 1]``, zero elsewhere (C^3)."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 256.0 * s ** 4 * (1.0 - s) ** 4, 0.0)


def bump_prime(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 1024.0 * s ** 3 * (1.0 - s) ** 3 * (1.0 - 2.0 * s), 0.0)


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave ``amplitude * profile((c (t - delay) - direction . x) / width)``.

    The pulse occupies ``0 < s < 1`` of the profile argument, so its leading
    front sits on ``direction . x = c (t - delay)``.
    """

    direction: tuple
    c: float
    width: float = 1.0
    delay: float = 0.0
    amplitude: float = 1.0
    profile: Callable = bump
    profile_prime: Callable = bump_prime

    def argument(self, points, t):
        x = np.asarray(points, float)
        return (self.c * (t - self.delay) - x @ np.asarray(self.direction)) / self.width

    def pressure(self, points, t):
        return self.amplitude * self.profile(self.argument(points, t))

    def gradient(self, points, t):
        d = self.amplitude * self.profile_prime(self.argument(points, t)) / self.width
        return -d[..., None] * np.asarray(self.direction)

    def front_time(self, points):
        """Time the leading front reaches ``points``."""
        return self.delay + np.asarray(points, float) @ np.asarray(self.direction) / self.c


@dataclass(frozen=True)
class IncidentScenario:
    """Scattered-field data: zero ``f, g, h`` and zero boundary values on the outer circle.

    The incident wave enters only through interface integrals:
    ``+int dp_inc/dn q`` in the acoustic rows and ``-rho1 int p_inc n . v`` in
    the elastic rows.
    """

    wave: IncidentWave
    params: MaterialParams
    g: Callable | None = None
    h: Callable | None = None
    f: Callable | None = None

    def boundary_values(self, t, n_outer: int) -> np.ndarray:
        return np.zeros(n_outer)

    def interface_forcing(self, sys: AssembledSystem) -> Callable:
        wave, rho1 = self.wave, self.params.rho1

        def acoustic(points, normals, t):
            return np.einsum("...i,...i->...", wave.gradient(points, t), normals)

        def elastic(points, normals, t):
            return -rho1 * wave.pressure(points, t)[..., None] * normals

        iface = sys.interface_load
        return lambda t: iface(t, acoustic=acoustic, elastic=elastic)

    def load_function(self, sys: AssembledSystem) -> Callable:
        forcing = self.interface_forcing(sys)
        if self.f is None:
            return forcing
        return lambda t: forcing(t) + sys.load(self.f, t)


def incident_wave_scenario(profile: Callable, direction, params: MaterialParams, rmap,
                           width: float = 1.0, delay: float | None = None, amplitude: float = 1.0,
                           obstacle_radius: float | None = None,
                           profile_prime: Callable | None = None) -> IncidentScenario:
    """Scenario data for a plane pulse hitting the obstacle.

    ``delay`` defaults to ``a / c``, so the front enters the identity region
    ``r <= a`` at ``t = 0``.  The obstacle (radius ``obstacle_radius``, default
    ``a``) must be quiescent at ``t = 0`` and ``profile`` must vanish for
    non-positive arguments.
    """
    theta = np.asarray(direction, dtype=float)
    if theta.shape != (2,) or not np.isfinite(theta).all():
        raise ConfigurationError(f"direction must be a 2-vector, got {direction!r}")
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ConfigurationError(f"direction must be a unit vector, |theta| = {np.linalg.norm(theta)!r}")
    if not width > 0.0:
        raise ConfigurationError(f"pulse width must be positive, got {width}")
    probe = -np.geomspace(1e-6, 1e3, 64)
    if np.any(np.asarray(profile(probe)) != 0.0):
        raise ConfigurationError("pulse profile must vanish for non-positive arguments")
    delay = rmap.a / params.c if delay is None else float(delay)
    r_obs = rmap.a if obstacle_radius is None else obstacle_radius
    if params.c * delay < r_obs * (1.0 - 1e-12):
        raise ConfigurationError(
            f"delay {delay} too short: pulse would already touch the obstacle (radius {r_obs}) at t = 0"
        )
    if profile_prime is None:
        if profile is not bump:
            raise ConfigurationError("profile_prime is required for a custom profile")
        profile_prime = bump_prime
    wave = IncidentWave(tuple(theta), params.c, width, delay, amplitude, profile, profile_prime)
    return IncidentScenario(wave, params)
