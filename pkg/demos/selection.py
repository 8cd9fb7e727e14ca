"""Picking the most dissipative candidate from a family of runs.

Three solver variants differ in artificial dissipation. The discounted
arctangent functional ranks them, an exhaustive audit confirms that no
candidate dominates the winner, and the long-time energy limit is checked.
"""

import numpy as np

from statflow.eos import EosParams
from statflow.grid import BoundaryData, FieldState, build_grid
from statflow.selection import CandidateFamily, SelectionFunctional, lyapunov_limit_check, select_maximal
from statflow.solver import SolverConfig, integrate

eos = EosParams(1.0, 1.4)
grid = build_grid(1, 1.0, 32)
bd = BoundaryData.from_functions(grid)
x = grid.cell_centers()[..., 0]
rho = 1.0 + 0.2 * np.cos(np.pi * x)
init = FieldState(rho, (0.3 * rho * np.sin(np.pi * x))[:, None])
times = np.linspace(0.0, 4.0, 9)

levels = [1.0, 1.5, 2.0]
cands = [integrate(init, bd, SolverConfig(mu=0.01, lam=0.05, eos=eos, t_end=4.0, artificial_dissipation=a), times)
         for a in levels]
family = CandidateFamily(cands, [f"a{a}" for a in levels])
res = select_maximal(family, SelectionFunctional(lam=1.0))
for pid, v in zip(family.provenance, res.values):
    print(f"{pid}: functional {v:.10f}")
print(f"selected {res.selected_id}, audit passed: {res.audit_passed}")

lim = lyapunov_limit_check(res.selected)
print(f"energy limit {lim.e_infty:.8f}, tail spread {lim.tail_spread:.1e}, converged: {lim.converged}")
