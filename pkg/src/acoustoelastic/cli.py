"""Command-line entry point: ``run``, ``verify`` and ``convergence``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import MaterialParams, assemble_system
from .config import ScenarioConfig, load_config, resolve_reference
from .diagnostics import EnergyRecorder, ProbeSampler, SnapshotWriter, write_probe_csv
from .mesh import MeshError, generate_disk_annulus
from .oracle import l2_error, make_manufactured
from .radial_map import MapDomainError, RadialMap
from .timestepper import (ConfigurationError, SolverError, TimeGrid, bump, default_dt,
                          incident_wave_scenario, initial_state, run)
from .verification import SUITE_NAMES, convergence_study, run_suite

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3
MIN_LEVELS = 3
ENERGY_FILE, PROBE_FILE, SNAPSHOT_DIR = "energy.csv", "probes.csv", "snapshots"


@dataclass
class RunSummary:
    final_energy: float
    drift: float
    wall_time: float
    n_steps: int
    dt: float
    n_dofs: int
    error: float | None = None  # L2 error at T for manufactured cases

    def lines(self) -> list:
        out = [f"unknowns      {self.n_dofs}",
               f"steps         {self.n_steps} x dt = {self.dt:.6g}",
               f"final energy  {self.final_energy:.10g}",
               f"energy drift  {self.drift:.3e}",
               f"wall time     {self.wall_time:.2f} s"]
        if self.error is not None:
            out.append(f"L2 error(T)   {self.error:.6e}")
        return out


def _problem_data(cfg: ScenarioConfig, sys, rmap, params):
    """Initial data ``(g, h)``, the load callable and the exact solution (if known)."""
    s = cfg.scenario
    if s.kind == "incident":
        scen = incident_wave_scenario(bump, s.direction, params, rmap, width=s.width, delay=s.delay,
                                      amplitude=s.amplitude, obstacle_radius=cfg.geometry.r_D)
        return None, None, scen.load_function(sys), None
    if s.kind == "manufactured":
        case = make_manufactured(rmap, params, s.case, omega=s.omega)
        return case.g, case.h, case.load_function(sys), case.p_exact
    if s.kind == "data":
        f = resolve_reference(s.f, "scenario.f") if s.f else None
        g = resolve_reference(s.g, "scenario.g") if s.g else None
        h = resolve_reference(s.h, "scenario.h") if s.h else None
        load = None if f is None else (lambda t: sys.load(f, t))
        return g, h, load, None
    return None, None, None, None


def run_scenario(cfg: ScenarioConfig, out_dir=None, echo=print) -> RunSummary:
    """Solve the configured scenario and write energy, probe and snapshot outputs."""
    t_start = time.perf_counter()
    geo, mat = cfg.geometry, cfg.materials
    out = Path(cfg.output.directory if out_dir is None else out_dir)
    params = MaterialParams(mat.c, mat.rho1, mat.rho2, mat.mu, mat.lam)
    rmap = RadialMap(geo.a, geo.b, geo.R)
    mesh = generate_disk_annulus(geo.r_D, geo.a, geo.b, geo.n_radial, geo.n_angular)
    system = assemble_system(mesh, rmap, params)
    dt = cfg.time.dt if cfg.time.dt is not None else default_dt(mesh, params, cfg.time.dt_factor)
    grid = TimeGrid.covering(cfg.time.T, dt)
    g, h, load, exact = _problem_data(cfg, system, rmap, params)

    out.mkdir(parents=True, exist_ok=True)
    obs = cfg.observers
    energy = EnergyRecorder(system, stride=obs.energy_stride)
    observers = [energy]
    probes = None
    if obs.probes:
        probes = ProbeSampler(system, np.asarray(obs.probes, float), stride=obs.probe_stride)
        observers.append(probes)
    if obs.snapshot_stride > 0:
        observers.append(SnapshotWriter(system, out / SNAPSHOT_DIR, stride=obs.snapshot_stride))
    echo(f"running {cfg.scenario.kind} scenario: {mesh.n_vertices} vertices, {grid.n_steps} steps")
    result = run(system, initial_state(system, g, h), grid, load, observers)

    energy.trace.to_csv(out / ENERGY_FILE)
    if probes is not None:
        write_probe_csv(out / PROBE_FILE, *probes.result)
    _, _, _, E, _ = energy.trace.arrays()
    scale = max(abs(E[0]), float(np.max(np.abs(E))))
    drift = float(np.max(np.abs(E - E[0])) / scale) if scale > 0.0 else 0.0
    error = None
    if exact is not None:
        error = l2_error(system, system.dof_map.split(result.final.U)[1], exact, grid.T)
    return RunSummary(float(E[-1]), drift, time.perf_counter() - t_start, grid.n_steps, grid.dt,
                      system.dof_map.n_total, error)


# -- argument handling -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_globals(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--out", metavar="DIR", default=default(None),
                        help="output directory (overrides output.directory for 'run')")
    parser.add_argument("--seed", type=int, metavar="N", default=default(0),
                        help="seed for randomized property checks")
    parser.add_argument("--quiet", action="store_true", default=default(False),
                        help="print only failures and errors")


def _levels(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < MIN_LEVELS:
        raise argparse.ArgumentTypeError(f"at least {MIN_LEVELS} levels are needed to report a rate, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acoustoelastic",
                     description="Acoustic-elastic scattering on a compressed domain.")
    _add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="solve a scenario from a config file")
    p.add_argument("config", help="scenario config (key = value lines)")

    p = sub.add_parser("verify", parents=[common], help="run acceptance checks")
    p.add_argument("suite", choices=SUITE_NAMES)

    p = sub.add_parser("convergence", parents=[common], help="manufactured-solution refinement study")
    p.add_argument("case", choices=("bubble", "dipole", "coupled"))
    p.add_argument("--levels", type=_levels, default=MIN_LEVELS, metavar="N",
                   help=f"refinement levels (>= {MIN_LEVELS})")
    p.add_argument("--order-threshold", type=float, default=1.8,
                   help="minimum observed order between the two finest levels")
    return parser


def _cmd_run(args, echo) -> int:
    cfg = load_config(args.config)
    summary = run_scenario(cfg, args.out, echo)
    for line in summary.lines():
        echo(line)
    return EXIT_OK


def _cmd_verify(args, echo) -> int:
    lines = []

    def report(r):
        lines.append(r.line())
        if not r.passed:
            print(r.line())
        else:
            echo(r.line())

    results = run_suite(args.suite, seed=args.seed, report=report)
    n_fail = sum(not r.passed for r in results)
    tail = f"{len(results) - n_fail}/{len(results)} checks passed"
    print(tail)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{args.suite}.txt").write_text("\n".join(lines + [tail]) + "\n")
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


def _cmd_convergence(args, echo) -> int:
    echo(f"{'level':>5} {'n_radial':>8} {'n_angular':>9} {'dt':>12} {'steps':>6} {'L2 error':>12} {'order':>6}")

    def show(r):
        echo(f"{r.level:>5d} {r.n_radial:>8d} {r.n_angular:>9d} {r.dt:>12.5g} {r.n_steps:>6d} "
             f"{r.error:>12.5e} {r.order:>6.2f}")

    rows = convergence_study(args.case, args.levels, progress=show)
    decreasing = all(b.error < a.error for a, b in zip(rows, rows[1:]))
    ok = decreasing and rows[-1].order >= args.order_threshold
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"convergence_{args.case}.csv", "w") as fh:
            fh.write("level,n_radial,n_angular,dt,n_steps,error,order\n")
            for r in rows:
                fh.write(f"{r.level},{r.n_radial},{r.n_angular},{r.dt:.17g},{r.n_steps},"
                         f"{r.error:.17g},{r.order:.17g}\n")
    verdict = "PASS" if ok else "FAIL"
    print(f"convergence.{args.case} order={rows[-1].order:.4g} threshold>={args.order_threshold:g} "
          f"decreasing={decreasing} {verdict}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"run": _cmd_run, "verify": _cmd_verify, "convergence": _cmd_convergence}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    echo = (lambda *a, **k: None) if args.quiet else print
    try:
        return COMMANDS[args.command](args, echo)
    except (ConfigurationError, MapDomainError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, OSError, ArithmeticError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
