"""Energies, field norms, and the conservation / causality / a priori checks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .assembly import AssembledSystem
from .mesh import Region
from .timestepper import ConfigurationError, IncidentWave, StateVector

NORM_NAMES = ("norm_p", "norm_gradp", "norm_ut", "norm_divu", "norm_gradu")
CSV_HEADER = ("t", "E1", "E2", "E") + NORM_NAMES


class DiagnosticError(ValueError):
    """Inconsistent inputs to a diagnostic check."""


def _quad(vec, mat):
    return float(vec @ (mat @ vec))


def compute_energy(sys: AssembledSystem, state: StateVector, rmap=None):
    """``(E1, E2, E)`` with ``E2`` in the second-derivative form.

    ``E1 = V_p' M_beta V_p + U_p' K_0 U_p`` and
    ``E2 = W_u' (rho1 rho2 M_u) W_u + V_u' (rho1 K_1) V_u``, evaluated with the
    assembly quadrature.  ``rmap`` is unused (the map is baked into ``sys``).
    """
    d, b = sys.dof_map, sys.blocks
    if state.W is None:
        raise DiagnosticError("E2 needs the acceleration; the state has W = None")
    _, y = d.split(state.U)
    vx, vy = d.split(state.V)
    wx, _ = d.split(state.W)
    E1 = _quad(vy, b["Mp"]) + _quad(y, b["K0"])
    E2 = _quad(wx, b["Mu"]) + _quad(vx, b["K1"])
    return E1, E2, E1 + E2


def first_order_elastic_energy(sys: AssembledSystem, state: StateVector) -> float:
    """``rho1 rho2 |u_t|^2 + rho1 (lam + mu) |div u|^2 + rho1 mu |grad u|^2``."""
    d, b = sys.dof_map, sys.blocks
    x, _ = d.split(state.U)
    vx, _ = d.split(state.V)
    return _quad(vx, b["Mu"]) + _quad(x, b["K1"])


def field_norms(sys: AssembledSystem, state: StateVector) -> np.ndarray:
    """``|p|, |grad p|`` over the fluid and ``|u_t|, |div u|, |grad u|`` over the solid (L2)."""
    d, n = sys.dof_map, sys.norms
    x, y = d.split(state.U)
    vx, _ = d.split(state.V)
    sq = [_quad(y, n.p_mass), _quad(y, n.p_grad), _quad(vx, n.u_mass), _quad(x, n.u_div), _quad(x, n.u_grad)]
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass
class EnergyTrace:
    """Sampled energies and the five field norms."""

    times: list = field(default_factory=list)
    E1: list = field(default_factory=list)
    E2: list = field(default_factory=list)
    E2_first_order: list = field(default_factory=list)
    E: list = field(default_factory=list)
    norms: list = field(default_factory=list)

    def append(self, t, e1, e2, e2_first, norms):
        if self.times and t <= self.times[-1]:
            raise DiagnosticError(f"sample time {t} not after {self.times[-1]}")
        self.times.append(float(t))
        self.E1.append(e1)
        self.E2.append(e2)
        self.E2_first_order.append(e2_first)
        self.E.append(e1 + e2)
        self.norms.append(np.asarray(norms, float))

    def arrays(self):
        return (np.asarray(self.times), np.asarray(self.E1), np.asarray(self.E2),
                np.asarray(self.E), np.asarray(self.norms).reshape(-1, len(NORM_NAMES)))

    def to_csv(self, path) -> None:
        t, e1, e2, e, norms = self.arrays()
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in zip(t, e1, e2, e, *norms.T):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        with open(Path(path)) as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_HEADER:
            raise DiagnosticError(f"{path}: unexpected header {rows[0]}")
        trace = cls()
        for r in rows[1:]:
            v = [float(s) for s in r]
            trace.times.append(v[0])
            trace.E1.append(v[1])
            trace.E2.append(v[2])
            trace.E.append(v[3])
            trace.norms.append(np.array(v[4:]))
        return trace


class EnergyRecorder:
    """Observer filling an :class:`EnergyTrace`.

    With ``load_at`` given, also records the source power ``2 V_p . F_p(t)``
    (acoustic block only), the integrand of the work term in the energy balance.
    """

    def __init__(self, sys: AssembledSystem, stride: int = 1, load_at: Callable | None = None):
        self.sys, self.stride, self.load_at = sys, stride, load_at
        self.trace = EnergyTrace()
        self.source_power: list = []

    def __call__(self, step, state):
        e1, e2, _ = compute_energy(self.sys, state)
        self.trace.append(state.t, e1, e2, first_order_elastic_energy(self.sys, state),
                          field_norms(self.sys, state))
        if self.load_at is not None:
            d = self.sys.dof_map
            self.source_power.append(2.0 * float(d.split(state.V)[1] @ d.split(self.load_at(state.t))[1]))

    @property
    def result(self):
        return self.trace


def check_energy_identity(trace: EnergyTrace, source_work=None, times=None) -> float:
    """Max of ``|E(t) - E(0) - int_0^t P| / max(E(0), max E)`` over samples.

    ``source_work`` holds the source power ``P = 2 (p_t, f)`` at the trace's
    sample times (trapezoid-integrated here); ``None`` means no source.
    """
    t, _, _, E, _ = trace.arrays()
    if source_work is None:
        work = np.zeros_like(E)
    else:
        power = np.asarray(source_work, float)
        if power.shape != E.shape or (times is not None and not np.array_equal(np.asarray(times), t)):
            raise DiagnosticError("source work and energy trace are sampled on different grids")
        work = np.concatenate([[0.0], np.cumsum(0.5 * (power[1:] + power[:-1]) * np.diff(t))])
    scale = max(E[0], E.max()) if len(E) else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(E - E[0] - work)) / scale)


# -- probes -------------------------------------------------------------------------------


def locate_points(mesh, points, region: Region = Region.FLUID):
    """Cell index and barycentric weights of each point within ``region``."""
    cells = mesh.cells_in(region)
    ids = np.flatnonzero(mesh.cell_region == region)
    p = mesh.vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    out_cells, out_w = [], []
    for x in np.atleast_2d(points):
        d = x - p[:, 0]
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], -1)
        k = int(np.argmax(lam.min(axis=1)))
        if lam[k].min() < -1e-10:
            raise ConfigurationError(f"point {tuple(x)} is not inside the {region.name} region")
        out_cells.append(ids[k])
        out_w.append(np.clip(lam[k], 0.0, 1.0))
    return np.array(out_cells), np.array(out_w)


class ProbeSampler:
    """Observer recording the P1-interpolated acoustic unknown at fixed points."""

    def __init__(self, sys: AssembledSystem, points, stride: int = 1):
        self.sys, self.stride = sys, stride
        self.points = np.atleast_2d(np.asarray(points, float))
        cells, self.weights = locate_points(sys.mesh, self.points)
        self.vertex_idx = sys.mesh.cells[cells]
        self.times: list = []
        self.values: list = []

    def __call__(self, step, state):
        d = self.sys.dof_map
        loc = d.acoustic_lookup[self.vertex_idx]
        y = d.split(state.U)[1]
        nodal = np.where(loc >= 0, y[np.maximum(loc, 0)], 0.0)
        self.times.append(state.t)
        self.values.append(np.einsum("pk,pk->p", nodal, self.weights))

    @property
    def result(self):
        return np.asarray(self.times), np.asarray(self.values).reshape(len(self.times), -1)


def write_probe_csv(path, times, values) -> None:
    values = np.asarray(values).reshape(len(times), -1)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"probe_{k}" for k in range(values.shape[1])])
        for t, row in zip(times, values):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def read_probe_csv(path):
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


class SnapshotWriter:
    """Observer writing the acoustic field as ``x y value`` rows over fluid vertices.

    One file ``snapshot_NNNNN.txt`` per sample plus ``manifest.txt`` listing
    ``index t file``; the manifest is rewritten after every sample so a failed
    run still leaves a consistent directory.
    """

    def __init__(self, sys: AssembledSystem, directory, stride: int = 1):
        self.sys, self.stride = sys, stride
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.vertices = sys.dof_map.fluid_vertices
        self.entries: list = []

    def __call__(self, step, state):
        d = self.sys.dof_map
        values = d.acoustic_to_vertices(d.split(state.U)[1])[self.vertices]
        xy = self.sys.mesh.vertices[self.vertices]
        name = f"snapshot_{len(self.entries):05d}.txt"
        np.savetxt(self.directory / name, np.column_stack([xy, values]), fmt="%.17g")
        self.entries.append((step, state.t, name))
        with open(self.directory / "manifest.txt", "w") as fh:
            fh.write("# index step t file\n")
            for i, (k, t, f) in enumerate(self.entries):
                fh.write(f"{i} {k} {t:.17g} {f}\n")

    @property
    def result(self):
        return [(t, self.directory / f) for _, t, f in self.entries]


# -- causality ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    probe: int
    t: float
    value: float
    limit: float


def arrival_times(probe_points, wave: IncidentWave, max_speed: float, obstacle_points,
                  fluid_speed: float | None = None) -> np.ndarray:
    """Earliest time scattered energy can reach each probe.

    The incident front reaches boundary point ``y`` at ``delay + theta . y / c``.
    From there a disturbance spreads at most at ``max_speed`` to any exit
    point ``y'`` of the obstacle and then at ``fluid_speed`` (default
    ``max_speed``) to the probe.  Both legs use straight-line distances, so the
    result is a lower bound on the true arrival time.
    """
    probes = np.atleast_2d(probe_points)
    y = np.atleast_2d(obstacle_points)
    t_hit = wave.front_time(y)
    t_exit = np.empty(len(y))
    for start in range(0, len(y), 512):
        chunk = y[start:start + 512]
        dist = np.linalg.norm(chunk[:, None, :] - y[None, :, :], axis=-1)
        t_exit[start:start + 512] = np.min(t_hit[None, :] + dist / max_speed, axis=1)
    speed = max_speed if fluid_speed is None else fluid_speed
    dist = np.linalg.norm(probes[:, None, :] - y[None, :, :], axis=-1)
    return np.min(t_exit[None, :] + dist / speed, axis=1)


def circle_points(radius: float, n: int = 4096) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n) / n
    return radius * np.stack([np.cos(ang), np.sin(ang)], -1)


def check_finite_speed(times, values, probe_points, wave: IncidentWave, max_speed: float,
                       rmap, obstacle_radius: float, threshold: float = 1e-6,
                       margin: float = 0.1, obstacle_points=None, fluid_speed: float | None = None) -> list:
    """All samples with ``|p| > threshold * peak`` before ``(1 - margin) * t_arrival``.

    Probes must lie in the identity region ``|x| <= a``.  The peak is the
    incident amplitude.  See :func:`arrival_times` for the speeds.
    """
    probes = np.atleast_2d(np.asarray(probe_points, float))
    r = np.linalg.norm(probes, axis=1)
    if np.any(r > rmap.a * (1.0 + 1e-12)):
        raise ConfigurationError(f"probe at radius {r.max():.6g} outside the identity region r <= {rmap.a}")
    if np.any(r <= obstacle_radius):
        raise ConfigurationError("probe inside the obstacle")
    if obstacle_points is None:
        obstacle_points = circle_points(obstacle_radius)
    t_arr = arrival_times(probes, wave, max_speed, obstacle_points, fluid_speed)
    times = np.asarray(times, float)
    values = np.asarray(values, float).reshape(len(times), -1)
    limit = threshold * abs(wave.amplitude)
    out = []
    for k in range(probes.shape[0]):
        early = times < (1.0 - margin) * t_arr[k]
        bad = np.flatnonzero(early & (np.abs(values[:, k]) > limit))
        out += [Violation(k, float(times[i]), float(values[i, k]), limit) for i in bad]
    return out


# -- a priori bound structure ---------------------------------------------------------------


def l2_norm_of(sys: AssembledSystem, func: Callable | None, t: float | None = None) -> float:
    """``|func|_{L2(Omega)}`` by the 7-point rule on fluid cells."""
    if func is None:
        return 0.0
    vl = sys.volume_load
    vals = func(vl.points) if t is None else func(vl.points, t)
    vals = np.broadcast_to(np.asarray(vals, float), vl.weights.shape)
    return float(np.sqrt(np.sum(vl.weights * vals ** 2)))


def l1_in_time_norm(sys: AssembledSystem, f: Callable | None, T: float, n: int = 400) -> float:
    """``int_0^T |f(., t)|_{L2} dt`` by the trapezoid rule."""
    if f is None:
        return 0.0
    t = np.linspace(0.0, T, n + 1)
    vals = np.array([l2_norm_of(sys, f, s) for s in t])
    return float(np.trapezoid(vals, t) if hasattr(np, "trapezoid") else np.trapz(vals, t))


@dataclass(frozen=True)
class AprioriRun:
    """One solve of the a priori study: data scale ``alpha``, horizon ``T`` and data norms."""

    alpha: float
    T: float
    trace: EnergyTrace
    g_norm: float
    f_norm: float
    h_norm: float

    def lhs_sup(self) -> float:
        """``max_t`` of the summed squared left-side norms."""
        _, _, _, _, n = self.trace.arrays()
        return float(np.max(np.sum(n ** 2, axis=1)))

    def lhs_l2(self) -> float:
        """Time integral of the summed squared left-side norms (trapezoid)."""
        t, _, _, _, n = self.trace.arrays()
        s = np.sum(n ** 2, axis=1)
        return float(np.sum(0.5 * (s[1:] + s[:-1]) * np.diff(t)))

    def rhs_sup(self) -> float:
        return self.g_norm ** 2 + self.T ** 2 * (self.f_norm ** 2 + self.h_norm ** 2)

    def rhs_l2(self) -> float:
        return self.T * self.g_norm ** 2 + self.T ** 3 * (self.f_norm ** 2 + self.h_norm ** 2)


@dataclass
class AprioriReport:
    homogeneity_error: float
    ratio_spread: float
    ratios_sup: dict
    ratios_l2: dict
    growth_sup: list
    growth_l2: list

    def growth_margin(self, slack=1.2) -> float:
        """Largest observed growth over its allowed ``slack * (T2/T1)^k`` (k = 2 sup, 3 L2)."""
        worst = 0.0
        for growth, power in ((self.growth_sup, 2), (self.growth_l2, 3)):
            for t1, t2, g in growth:
                worst = max(worst, g / (slack * (t2 / t1) ** power))
        return worst

    def passed(self, homogeneity_tol=1e-8, slack=1.2) -> bool:
        return (self.homogeneity_error <= homogeneity_tol and self.ratio_spread <= homogeneity_tol
                and self.growth_margin(slack) <= 1.0)


def check_apriori_structure(runs: Sequence[AprioriRun]) -> AprioriReport:
    """Homogeneity in the data scale and T-growth of the bound ratios.

    Homogeneity compares every sampled norm of each scaled run with ``alpha``
    times the matching ``alpha = 1`` run (same ``T``).  Growth factors are the
    left-side ratios between successive horizons at ``alpha = 1``.
    """
    if len(runs) < 3:
        raise DiagnosticError(f"need at least 3 runs, got {len(runs)}")
    base = {r.T: r for r in runs if r.alpha == 1.0}
    if not base:
        raise DiagnosticError("no alpha = 1 run to compare against")
    hom = 0.0
    spread = 0.0
    ratios_sup, ratios_l2 = {}, {}
    for r in runs:
        ref = base.get(r.T)
        if ref is None:
            raise DiagnosticError(f"no alpha = 1 run with T = {r.T}")
        _, _, _, _, n = r.trace.arrays()
        _, _, _, _, n0 = ref.trace.arrays()
        if n.shape != n0.shape:
            raise DiagnosticError("scaled runs sampled differently")
        scale = np.max(np.abs(n0)) * r.alpha
        if scale > 0.0:
            hom = max(hom, float(np.max(np.abs(n - r.alpha * n0)) / scale))
        rs, r2 = r.lhs_sup() / r.rhs_sup(), r.lhs_l2() / r.rhs_l2()
        ratios_sup[(r.alpha, r.T)], ratios_l2[(r.alpha, r.T)] = rs, r2
        rs0, r20 = ref.lhs_sup() / ref.rhs_sup(), ref.lhs_l2() / ref.rhs_l2()
        spread = max(spread, abs(rs - rs0) / rs0, abs(r2 - r20) / r20)
    horizons = sorted(base)
    pairs = list(zip(horizons, horizons[1:]))
    growth_sup = [(t1, t2, base[t2].lhs_sup() / base[t1].lhs_sup()) for t1, t2 in pairs]
    growth_l2 = [(t1, t2, base[t2].lhs_l2() / base[t1].lhs_l2()) for t1, t2 in pairs]
    return AprioriReport(hom, spread, ratios_sup, ratios_l2, growth_sup, growth_l2)
