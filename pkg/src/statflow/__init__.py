"""Statistical solutions of the barotropic Navier-Stokes system on bounded domains.

Finite-volume trajectories with energy monitors, ensembles propagated by
the solution semigroup, energy-based transport distances between ensembles
and selection of maximally dissipative trajectories.
"""

from .eos import DomainError, EosParams, energy_density, pressure, relative_energy_density
from .grid import BoundaryData, FieldState, Grid, build_grid, build_spectral_basis, read_snapshot, write_snapshot
from .measures import DataPoint, Ensemble, PreconditionError, pushforward, pushforward_path
from .selection import CandidateFamily, SelectionFunctional, energy_order, krylov_value, select_maximal
from .solver import SolverConfig, SolverError, Trajectory, integrate, step
from .transport import CostMatrix, build_cost_matrix, sinkhorn, transport_exact, we_distance

__version__ = "0.1.0"

__all__ = [
    "BoundaryData", "CandidateFamily", "CostMatrix", "DataPoint", "DomainError", "Ensemble", "EosParams",
    "FieldState", "Grid", "PreconditionError", "SelectionFunctional", "SolverConfig", "SolverError",
    "Trajectory", "build_cost_matrix", "build_grid", "build_spectral_basis", "energy_density", "energy_order",
    "integrate", "krylov_value", "pressure", "pushforward", "pushforward_path", "read_snapshot",
    "relative_energy_density", "select_maximal", "sinkhorn", "step", "transport_exact", "we_distance",
    "write_snapshot",
]
