"""Energy transport distance between ensembles and its stability in time.

Shows that the distance is not symmetric, then perturbs a smooth ensemble
at shrinking scales and follows the distance along the flow.
"""

import numpy as np

from statflow.eos import EosParams
from statflow.grid import BoundaryData, build_grid
from statflow.measures import DataPoint, Ensemble, fourier_ensemble
from statflow.solver import SolverConfig
from statflow.transport import asymmetry_report, continuity_experiment

eos = EosParams(1.0, 1.4)
grid = build_grid(1, 1.0, 32)
bd = BoundaryData.from_functions(grid)

dense = Ensemble.dirac(DataPoint(np.full(32, 2.0), np.zeros((32, 1)), bd, eos=eos))
light = Ensemble.dirac(DataPoint(np.full(32, 1.0), np.zeros((32, 1)), bd, eos=eos))
fwd, back = asymmetry_report(dense, light, eos)
print(f"W(dense -> light) = {fwd:.6f}, W(light -> dense) = {back:.6f}")

nu = fourier_ensemble(grid, bd, 4, seed=0, eos=eos)
cfg = SolverConfig(mu=0.01, lam=0.05, eos=eos, t_end=1.0)
rep = continuity_experiment(nu, [2.0**-n for n in range(1, 5)], T=1.0, L=2.0, cfg=cfg, n_times=5)
print(f"\nreference density range {rep['reference_range']} inside band {rep['band']}: {rep['valid']}")
print(f"{'delta':>8} {'W at t=0':>12} {'sup_t W':>12} {'ratio':>7}")
for r in rep["rows"]:
    print(f"{r['delta']:8.4f} {r['initial']:12.4e} {r['sup']:12.4e} {r['ratio']:7.3f}")
