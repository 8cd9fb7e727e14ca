"""Quick invariant suite run by ``statflow verify``.

Each check is small enough that the whole suite finishes in a few seconds.
Results are written to ``verify.json`` and ``verify.csv`` in the output
directory.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from . import archive
from .config import canonical_json, config_hash, eos_from
from .eos import EosParams, pressure, pressure_potential, potential_derivative, relative_energy_field
from .grid import BoundaryData, FieldState, build_grid
from .measures import DataPoint, Ensemble, pushforward
from .selection import CandidateFamily, SelectionFunctional, select_maximal
from .solver import SolverConfig, Trajectory, integrate
from .transport import CostMatrix, transport_exact


def _bregman(eos: EosParams, rng) -> tuple:
    n = 500
    rho, rho_t = rng.uniform(0.1, 5.0, (2, n))
    m, m_t = rng.normal(size=(2, n, 1))
    vals, finite = relative_energy_field(rho, m, rho_t, m_t, eos)
    zero, _ = relative_energy_field(rho, m, rho, m, eos)
    ok = bool(np.all(finite) and np.min(vals) >= -1e-12 and np.max(np.abs(zero)) <= 1e-12)
    return ok, f"min {np.min(vals):.3e}, base-point max {np.max(np.abs(zero)):.1e}"


def _potential_identity(eos: EosParams, rng) -> tuple:
    rho = np.geomspace(0.1, 10.0, 200)
    err = np.abs(potential_derivative(rho, eos) * rho - pressure_potential(rho, eos) - pressure(rho, eos))
    rel = float(np.max(err / pressure(rho, eos)))
    return rel <= 1e-8, f"max relative error {rel:.2e}"


def _closed_mass(eos: EosParams, rng) -> tuple:
    grid = build_grid(1, 1.0, 32)
    bd = BoundaryData.from_functions(grid)
    x = grid.cell_centers()[..., 0]
    state = FieldState(1.0 + 0.2 * np.cos(np.pi * x), (0.3 * np.sin(np.pi * x))[..., None])
    traj = integrate(state, bd, SolverConfig(mu=0.01, lam=0.05, eos=eos, t_end=0.5), [0.0, 0.25, 0.5])
    masses = [np.sum(s.rho) * grid.cell_volume for s in traj.states]
    drift = float(np.max(np.abs(np.array(masses) - masses[0])) / masses[0])
    energy_ok = bool(np.all(traj.residual_log["energy"] <= traj.cfg.energy_tol * traj.energy0))
    return drift <= 1e-13 and energy_ok, f"mass drift {drift:.1e}, energy inequality {'holds' if energy_ok else 'violated'}"


def _equilibrium(eos: EosParams, rng) -> tuple:
    grid = build_grid(2, [1.0, 1.0], [8, 8])
    bd = BoundaryData.from_functions(grid)
    state = FieldState(np.full(grid.cells, 1.3), np.zeros(grid.cells + (2,)))
    cfg = SolverConfig(mu=0.01, lam=0.05, eos=eos, t_end=1.0, dt=1e-3)
    traj = integrate(state, bd, cfg, [0.0, 0.1])
    end = traj.states[-1]
    ok = bool(np.array_equal(end.rho, state.rho) and np.array_equal(end.mom, state.mom))
    return ok, f"{len(traj.step_times) - 1} steps, bit-exact {ok}"


def _transport(eos: EosParams, rng) -> tuple:
    worst = 0.0
    for _ in range(10):
        n = 4
        C = rng.uniform(0, 1, (n, n))
        w = np.full(n, 1.0 / n)
        value, plan = transport_exact(w, w, CostMatrix.from_array(C))
        brute = min(sum(C[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))
        worst = max(worst, abs(value - brute), plan.marginal_error(w, w))
    return worst <= 1e-9, f"max deviation from permutation minimum {worst:.1e}"


def _dirac(eos: EosParams, rng) -> tuple:
    grid = build_grid(1, 1.0, 16)
    bd = BoundaryData.from_functions(grid)
    rho = 1.0 + 0.1 * rng.uniform(size=grid.cells)
    mom = np.zeros(grid.cells + (1,))
    cfg = SolverConfig(eos=eos, t_end=0.2)
    atom = DataPoint(rho, mom, bd, grid=grid, eos=eos)
    moved = pushforward(Ensemble.dirac(atom), 0.2, cfg).atoms[0]
    direct = integrate(atom.state, bd, cfg, [0.0, 0.2]).states[-1]
    ok = bool(np.array_equal(moved.rho, direct.rho) and np.array_equal(moved.mom, direct.mom))
    return ok, f"bit-exact {ok}"


def _selection(eos: EosParams, rng) -> tuple:
    times = np.linspace(0, 1, 6)
    base = 2.0 - np.cumsum(rng.uniform(0, 0.1, (4, 6)), axis=1)
    cands = [Trajectory.synthetic(times, e) for e in base]
    res = select_maximal(CandidateFamily(cands, check_monitors=False), SelectionFunctional())
    return res.audit_passed, f"selected {res.selected_id}"


CHECKS = {
    "bregman": _bregman,
    "potential_identity": _potential_identity,
    "closed_mass": _closed_mass,
    "equilibrium": _equilibrium,
    "transport": _transport,
    "dirac_consistency": _dirac,
    "selection_audit": _selection,
}


def run_verify(cfg: dict, out, profile: str = "default") -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(canonical_json(cfg) + "\n")
    eos = eos_from(cfg)
    rows, results = [], {}
    for name, check in CHECKS.items():
        rng = np.random.default_rng(int(cfg["ensemble"]["seed"]))
        try:
            ok, detail = check(eos, rng)
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        print(f"  {'PASS' if ok else 'FAIL'} {name}: {detail}")
        rows.append([name, bool(ok), detail])
        results[name] = {"passed": bool(ok), "detail": detail}
    passed = all(r[1] for r in rows)
    archive.write_csv(out / "verify.csv", ["check", "passed", "detail"], rows)
    archive.write_json(out / "verify.json", {"checks": results, "passed": passed, "profile": profile})
    archive.write_manifest(out, "verify", config_hash(cfg))
    return {"passed": passed, "checks": results}
