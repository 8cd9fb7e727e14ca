"""Experiment drivers behind the command-line interface.

Each ``run_*`` function takes a resolved configuration and an output
directory, writes a self-describing archive and returns a summary dict with
a ``passed`` flag. Nothing here parses arguments or chooses exit codes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import archive
from .config import ConfigError, build_grid_from, canonical_json, config_hash, eos_from, solver_from
from .grid import (
    boundary_from_variables,
    boundary_variables,
    build_spectral_basis,
    read_snapshot,
    state_from_variables,
    state_variables,
    write_snapshot,
)
from .measures import (
    DataPoint,
    Ensemble,
    Observable,
    _advance,
    atom_trajectories,
    energy_observable,
    expectation,
    fourier_ensemble,
)
from .monitors import energy_step_tolerance, mass_balance_residual
from .presets import build_boundary, build_initial, manufactured
from .selection import CandidateFamily, SelectionFunctional, select_maximal
from .solver import Trajectory, integrate
from .transport import (
    build_cost_matrix,
    continuity_experiment,
    we_distance_entropic,
    we_distance_exact,
)

# relative tolerances for the residual monitors
PROFILES = {
    "default": {"mass": 1e-8, "momentum": 1e-8, "energy": 1.0},
    "strict": {"mass": 1e-12, "momentum": 1e-12, "energy": 0.1},
}


def trajectory_monitors(traj: Trajectory, profile: str = "default") -> dict:
    """Largest per-step residuals against their tolerances."""
    p = PROFILES[profile]
    vol = traj.grid.cell_volume
    mass0 = float(np.sum(traj.states[0].rho) * vol)
    mom_scale = max(1.0, float(np.sum(np.abs(traj.states[0].mom)) * vol))
    log = traj.residual_log
    out = {
        "mass_residual": float(np.max(np.abs(log["mass"]))) if len(log["mass"]) else 0.0,
        "mass_tolerance": p["mass"] * max(1.0, mass0),
        "momentum_residual": float(np.max(log["momentum"])) if len(log["momentum"]) else 0.0,
        "momentum_tolerance": p["momentum"] * mom_scale,
        "energy_residual": float(np.max(log["energy"])) if len(log["energy"]) else 0.0,
        "energy_tolerance": p["energy"] * energy_step_tolerance(traj),
        "steps": int(len(log["dt"])),
        "profile": profile,
    }
    out["passed"] = bool(
        out["mass_residual"] <= out["mass_tolerance"]
        and out["momentum_residual"] <= out["momentum_tolerance"]
        and out["energy_residual"] <= out["energy_tolerance"]
    )
    return out


def _write_config(root: Path, cfg: dict) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(canonical_json(cfg) + "\n")


def write_trajectory_archive(root, traj: Trajectory, cfg: dict, profile: str = "default") -> dict:
    """Config, snapshots, CSV logs, per-interval balances, monitors and manifest."""
    root = Path(root)
    _write_config(root, cfg)
    monitors = trajectory_monitors(traj, profile)
    archive.write_trajectory(root, traj, monitors)
    mass = mass_balance_residual(traj)
    ends = traj.output_step_indices()
    archive.write_csv(
        root / "intervals.csv",
        ["t_start", "t_end", "mass_balance", "energy_left", "energy_right", "steps"],
        (
            (traj.times[k], traj.times[k + 1], mass[k], traj.energy_trace.left_values[ends[k]],
             traj.energy_trace.right_values[ends[k + 1]], ends[k + 1] - ends[k])
            for k in range(len(traj.times) - 1)
        ),
    )
    archive.write_manifest(root, "trajectory", config_hash(cfg), {"times": list(map(float, traj.times))})
    return monitors


# simulate ------------------------------------------------------------------------------
def simulate(cfg: dict) -> Trajectory:
    grid = build_grid_from(cfg)
    bd, forcing = build_boundary(cfg, grid)
    initial = build_initial(cfg, bd, grid)
    return integrate(initial, bd, solver_from(cfg), cfg["output_times"], grid=grid, forcing=forcing)


def mms_convergence(cfg: dict, resolutions) -> list:
    """L1 errors of the manufactured channel at the final output time, per resolution."""
    m = manufactured(cfg)
    solver = solver_from(cfg)
    times = cfg["output_times"]
    rows, prev = [], None
    for n in resolutions:
        grid = m.grid(int(n))
        traj = integrate(m.state(times[0], grid), m.boundary(grid), solver, times, grid=grid, forcing=m)
        err = m.l1_error(traj.states[-1], times[-1], grid)
        ratio = prev / err if prev is not None and err > 0 else float("nan")
        rows.append({"cells": int(n), "h": grid.spacing[0], "l1_error": err, "ratio": ratio,
                     "order": float(np.log2(ratio)) if np.isfinite(ratio) else float("nan")})
        prev = err
    return rows


def run_simulate(cfg: dict, out, profile: str = "default") -> dict:
    out = Path(out)
    traj = simulate(cfg)
    monitors = write_trajectory_archive(out, traj, cfg, profile)
    summary = {"monitors": monitors, "passed": monitors["passed"]}
    resolutions = cfg["mms"]["resolutions"]
    if resolutions:
        if cfg["boundary"]["preset"] != "mms":
            raise ConfigError("mms.resolutions", "needs the mms boundary preset")
        rows = mms_convergence(cfg, resolutions)
        archive.write_csv(out / "convergence.csv", list(rows[0]), (r.values() for r in rows))
        archive.write_manifest(out, "trajectory", config_hash(cfg), {"times": list(map(float, traj.times))})
        summary["convergence"] = rows
    return summary


# ensembles ----------------------------------------------------------------------------
def observables(names) -> dict:
    table = {
        "energy": energy_observable(),
        "r1": Observable(lambda r, w, e: r[0]),
        "w1": Observable(lambda r, w, e: w[0]),
    }
    return {n: table[n] for n in names}


def sample_ensemble(cfg: dict):
    """Initial ensemble and forcing declared by the configuration."""
    grid = build_grid_from(cfg)
    bd, forcing = build_boundary(cfg, grid)
    ens_cfg = cfg["ensemble"]
    eos = eos_from(cfg)
    if ens_cfg["sampler"] == "dirac":
        s = build_initial(cfg, bd, grid)
        ens = Ensemble.dirac(DataPoint(s.rho, s.mom, bd, grid=grid, eos=eos), time=cfg["output_times"][0])
        ens.meta = {"sampler": "dirac", "seed": int(ens_cfg["seed"])}
    else:
        base = float(cfg["initial"].get("params", {}).get("rho0", 1.0))
        ens = fourier_ensemble(
            grid, bd, int(ens_cfg["n_atoms"]), int(ens_cfg["seed"]), base_density=base,
            density_amplitude=float(ens_cfg["density_amplitude"]),
            momentum_amplitude=float(ens_cfg["momentum_amplitude"]), modes=int(ens_cfg["modes"]), eos=eos,
        )
        ens.time = cfg["output_times"][0]
    return ens, forcing


def run_ensemble(cfg: dict, out, workers: int = 1, profile: str = "default") -> dict:
    out = Path(out)
    _write_config(out, cfg)
    ens, forcing = sample_ensemble(cfg)
    times = np.asarray(cfg["output_times"])
    trajs = atom_trajectories(ens, times, solver_from(cfg), workers, forcing)
    (out / "atoms").mkdir(parents=True, exist_ok=True)
    atom_files, traj_dirs, all_monitors = [], [], []
    grid = ens.grid
    for i, (atom, tr) in enumerate(zip(ens.atoms, trajs)):
        name = f"atoms/atom_{i:04d}.fsnp"
        write_snapshot(out / name, grid, ens.time, state_variables(atom.state, grid), extra={"energy": atom.energy})
        atom_files.append(name)
        tdir = f"trajectories/atom_{i:04d}"
        all_monitors.append(write_trajectory_archive(out / tdir, tr, cfg, profile))
        traj_dirs.append(tdir)
    write_snapshot(out / "atoms" / "boundary.fsnp", grid, ens.time, boundary_variables(ens.atoms[0].bd, grid),
                   extra={"rho_floor": ens.atoms[0].bd.rho_floor})
    basis = build_spectral_basis(grid, int(cfg["ensemble"]["basis_size"]))
    obs = observables(cfg["ensemble"]["observables"])
    rows = []
    for k in range(len(times)):
        nu_k = ens if k == 0 else _advance(ens, trajs, k)
        rows.append([times[k]] + [expectation(nu_k, o, basis) for o in obs.values()])
    archive.write_csv(out / "expectations.csv", ["time"] + list(obs), rows)
    passed = all(m["passed"] for m in all_monitors)
    archive.write_json(out / "monitors.json", {"atoms": all_monitors, "passed": passed})
    extra = {
        "times": list(map(float, times)),
        "sampler": ens.meta.get("sampler"),
        "seed": ens.meta.get("seed"),
        "atoms": atom_files,
        "boundary": "atoms/boundary.fsnp",
        "weights": list(map(float, ens.weights)),
        "trajectories": traj_dirs,
    }
    archive.write_manifest(out, "ensemble", config_hash(cfg), extra)
    return {"passed": passed, "n_atoms": len(ens.atoms), "expectations": rows}


def load_ensemble(path, time: float | None = None) -> Ensemble:
    """Ensemble from an ensemble archive, at its initial time or at an archived output time."""
    root = Path(path)
    if root.is_file():
        root = root.parent
    man = archive.read_manifest(root)
    if man.get("kind") != "ensemble":
        raise ValueError(f"{root} is not an ensemble archive")
    grid, _, bvars, header = read_snapshot(root / man["boundary"])
    bd = boundary_from_variables(bvars, grid, header.get("extra", {}).get("rho_floor", 1e-3))
    cfg = archive_config(root)
    eos = eos_from(cfg)
    atoms = []
    if time is None or time == man["times"][0]:
        t = man["times"][0]
        for f in man["atoms"]:
            _, t, variables, h = read_snapshot(root / f)
            s = state_from_variables(variables, grid)
            atoms.append(DataPoint(s.rho, s.mom, bd, h.get("extra", {}).get("energy"), grid, eos))
    else:
        matches = [k for k, tk in enumerate(man["times"]) if abs(tk - time) <= 1e-12 * max(1.0, abs(time))]
        if not matches:
            raise ValueError(f"time {time} is not an archived output time {man['times']}")
        k = matches[0]
        t = man["times"][k]
        for d in man["trajectories"]:
            _, _, variables, _ = read_snapshot(root / d / "snapshots" / f"state_{k:04d}.fsnp")
            s = state_from_variables(variables, grid)
            atoms.append(DataPoint(s.rho, s.mom, bd, None, grid, eos))
    return Ensemble(atoms, np.asarray(man["weights"]), float(t), {"sampler": man.get("sampler"), "seed": man.get("seed")})


def archive_config(root) -> dict:
    return json.loads((Path(root) / "config.json").read_text())


def run_distance(cfg: dict, path_a, path_b, out) -> dict:
    out = Path(out)
    _write_config(out, cfg)
    tcfg = cfg["transport"]
    ens_a = load_ensemble(path_a, tcfg["time"])
    ens_b = load_ensemble(path_b, tcfg["time"])
    eos = eos_from(cfg)
    rows, report = [], {"method": tcfg["method"], "time": ens_a.time, "inputs": [Path(path_a).name, Path(path_b).name]}
    for label, e1, e2 in (("A->B", ens_a, ens_b), ("B->A", ens_b, ens_a)):
        cost = build_cost_matrix(e1, e2, eos)
        if tcfg["method"] == "exact":
            value, plan = we_distance_exact(e1, e2, cost)
            info = {"converged": True, "iterations": 0, "entropy_bound": 0.0,
                    "marginal_error": plan.marginal_error(e1.weights, e2.weights) if plan else float("nan")}
        else:
            value, plan, res = we_distance_entropic(e1, e2, cost, float(tcfg["epsilon"]), int(tcfg["max_iter"]))
            info = {"converged": res.converged, "iterations": res.iterations,
                    "entropy_bound": res.entropy_bound, "marginal_error": res.marginal_error}
        rows.append([label, value, info["converged"], info["iterations"], info["entropy_bound"], info["marginal_error"]])
        report[label] = {"value": value, **info}
        if tcfg["dump_plan"] and plan is not None:
            archive.write_csv(out / f"plan_{label.replace('->', '_to_')}.csv",
                              [f"b{j}" for j in range(plan.coupling.shape[1])], plan.coupling)
    archive.write_csv(out / "distance.csv",
                      ["direction", "value", "converged", "iterations", "entropy_bound", "marginal_error"], rows)
    report["passed"] = bool(all(report[k]["converged"] for k in ("A->B", "B->A")))
    archive.write_json(out / "distance.json", report)
    archive.write_manifest(out, "distance", config_hash(cfg))
    return report


def run_continuity(cfg: dict, out, workers: int = 1) -> dict:
    out = Path(out)
    _write_config(out, cfg)
    c = cfg["continuity"]
    nu, _ = sample_ensemble(cfg)
    solver = solver_from(cfg, t_end=max(float(cfg["solver"]["t_end"]), nu.time + float(c["T"])))
    res = continuity_experiment(nu, c["deltas"], float(c["T"]), float(c["L"]), solver,
                                n_times=int(c["n_times"]), amplitude=float(c["amplitude"]), workers=workers)
    archive.write_csv(
        out / "continuity.csv",
        ["n", "delta", "w_initial", "w_sup", "ratio", "density_w"],
        ([n + 1, r["delta"], r["initial"], r["sup"], r["ratio"], r["density_w"]] for n, r in enumerate(res["rows"])),
    )
    meta = {k: v for k, v in res.items() if k != "rows"}
    sups = [r["sup"] for r in res["rows"]]
    meta["sup_monotone_decreasing"] = bool(all(b < a for a, b in zip(sups, sups[1:])))
    ratios = [r["ratio"] for r in res["rows"] if r["delta"] > 0]
    if len(ratios) >= 2:
        meta["log_ratio_slope"] = float(np.polyfit(np.arange(len(ratios)), np.log(ratios), 1)[0])
    archive.write_json(out / "continuity.json", meta)
    archive.write_manifest(out, "continuity", config_hash(cfg))
    return {"passed": res["valid"], **meta, "rows": res["rows"]}


def run_select(cfg: dict, out, workers: int = 1) -> dict:
    out = Path(out)
    _write_config(out, cfg)
    s = cfg["selection"]
    grid = build_grid_from(cfg)
    bd, forcing = build_boundary(cfg, grid)
    initial = build_initial(cfg, bd, grid)
    levels = [float(a) for a in s["dissipation_levels"]]
    ids = [f"a{a}" for a in levels]
    cands = [
        integrate(initial, bd, solver_from(cfg, artificial_dissipation=a), cfg["output_times"], grid=grid, forcing=forcing)
        for a in levels
    ]
    family = CandidateFamily(cands, ids)
    result = select_maximal(family, SelectionFunctional(lam=float(s["lambda"])))
    sweep = {repr(float(lam)): select_maximal(family, SelectionFunctional(lam=float(lam))).selected_id
             for lam in s["lambda_sweep"]}
    report = {"candidates": ids, **result.to_dict(), "lambda": float(s["lambda"]), "lambda_sweep": sweep}
    archive.write_json(out / "selection.json", report)
    times = cfg["output_times"]
    energies = np.array([c.state_energies() for c in cands])
    archive.write_csv(out / "candidate_energies.csv", ["time"] + ids, np.column_stack([times, energies.T]))
    archive.write_manifest(out, "selection", config_hash(cfg))
    return {"passed": result.audit_passed, **report}
