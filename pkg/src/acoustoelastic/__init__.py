"""Time-domain acoustic-elastic scattering on a compressed computational domain."""
from .assembly import AssembledSystem, DofMap, MaterialParams, assemble_system
from .config import ScenarioConfig, load_config, parse_config
from .diagnostics import EnergyRecorder, EnergyTrace, ProbeSampler, SnapshotWriter, compute_energy
from .mesh import BoundaryTag, Mesh, Region, generate_disk_annulus, load_mesh, write_mesh
from .oracle import ScatteringSetup, make_manufactured
from .radial_map import IdentityMap, RadialMap, coefficients_at
from .timestepper import (ConfigurationError, IncidentWave, NewmarkSolver, SolverError, StateVector,
                          TimeGrid, incident_wave_scenario, initial_state, run)

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem", "BoundaryTag", "ConfigurationError", "DofMap", "EnergyRecorder", "EnergyTrace",
    "IdentityMap", "IncidentWave", "MaterialParams", "Mesh", "NewmarkSolver", "ProbeSampler",
    "RadialMap", "Region", "ScatteringSetup", "ScenarioConfig", "SnapshotWriter", "SolverError",
    "StateVector", "TimeGrid", "assemble_system", "coefficients_at", "compute_energy",
    "generate_disk_annulus", "incident_wave_scenario", "initial_state", "load_config", "load_mesh",
    "make_manufactured", "parse_config", "run", "write_mesh",
]
