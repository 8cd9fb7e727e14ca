"""A decaying wave in a closed 1D box.

Integrates one trajectory, prints the energy trace at the output times and
checks the discrete energy inequality and mass conservation.
"""

import numpy as np

from statflow.eos import EosParams
from statflow.grid import BoundaryData, FieldState, build_grid
from statflow.monitors import energy_inequality_residual, energy_step_tolerance, mass_balance_residual
from statflow.solver import SolverConfig, integrate

grid = build_grid(1, 1.0, 64)
bd = BoundaryData.from_functions(grid)  # u_B = 0, no body force
x = grid.cell_centers()[..., 0]
rho = 1.0 + 0.2 * np.cos(np.pi * x)
mom = (0.3 * rho * np.sin(np.pi * x))[:, None]

cfg = SolverConfig(mu=0.01, lam=0.05, eos=EosParams(1.0, 1.4), t_end=2.0)
traj = integrate(FieldState(rho, mom), bd, cfg, np.linspace(0.0, 2.0, 9))

print(f"{'t':>6} {'energy':>14} {'kinetic share':>14}")
for t, s, e in zip(traj.times, traj.states, traj.state_energies()):
    kinetic = 0.5 * np.sum(s.mom[:, 0] ** 2 / s.rho) * grid.cell_volume
    print(f"{t:6.2f} {e:14.10f} {kinetic / e:14.3e}")

tol = energy_step_tolerance(traj)
print(f"\nsteps: {len(traj.step_times) - 1}")
print(f"max per-interval energy residual: {np.max(energy_inequality_residual(traj)):.3e} (step tol {tol:.1e})")
print(f"max mass balance residual: {np.max(np.abs(mass_balance_residual(traj))):.1e}")
