"""Deterministic on-disk archives for trajectories, ensembles and reports.

Every archive directory holds a ``manifest.json`` listing the SHA-256 of
every other file. Files contain no timestamps or absolute paths, and floats
are written with ``repr`` so a re-run reproduces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .grid import (
    boundary_from_variables,
    boundary_variables,
    read_snapshot,
    state_from_variables,
    state_variables,
    write_snapshot,
)
from .solver import Trajectory

MANIFEST = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def file_hashes(root) -> dict:
    """SHA-256 of every file under ``root`` except manifests, keyed by relative path."""
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            out[p.relative_to(root).as_posix()] = sha256_file(p)
    return out


def write_manifest(root, kind: str, config_hash: str | None, extra: dict | None = None) -> dict:
    manifest = {"kind": kind, "config_hash": config_hash, "files": file_hashes(root)}
    if extra:
        manifest.update(extra)
    write_json(Path(root) / MANIFEST, manifest)
    return manifest


def read_manifest(root) -> dict:
    return json.loads((Path(root) / MANIFEST).read_text())


def verify_manifest(root) -> list:
    """Return relative paths whose hash no longer matches the manifest."""
    manifest = read_manifest(root)
    current = file_hashes(root)
    listed = manifest["files"]
    bad = [k for k, v in listed.items() if current.get(k) != v]
    bad += [k for k in current if k not in listed and not k.endswith(MANIFEST)]
    return sorted(bad)


# trajectories -----------------------------------------------------------------
def write_trajectory(root, traj: Trajectory, monitors: dict | None = None) -> list:
    """Write snapshots, energy trace and residual logs of ``traj`` under ``root``.

    Returns the list of written relative paths (the manifest is left to the caller).
    """
    root = Path(root)
    (root / "snapshots").mkdir(parents=True, exist_ok=True)
    written = []
    for k, (t, s) in enumerate(zip(traj.times, traj.states)):
        name = f"snapshots/state_{k:04d}.fsnp"
        write_snapshot(root / name, traj.grid, t, state_variables(s, traj.grid))
        written.append(name)
    write_snapshot(root / "boundary.fsnp", traj.grid, traj.times[0], boundary_variables(traj.bd, traj.grid),
                   extra={"rho_floor": traj.bd.rho_floor})
    written.append("boundary.fsnp")
    tr = traj.energy_trace
    write_csv(
        root / "energy_trace.csv",
        ["time", "left_value", "right_value"],
        zip(tr.breakpoints, tr.left_values, tr.right_values),
    )
    log = traj.residual_log
    write_csv(
        root / "residuals.csv",
        ["time", "dt", "mass", "momentum", "energy"],
        zip(log["time"], log["dt"], log["mass"], log["momentum"], log["energy"]),
    )
    written += ["energy_trace.csv", "residuals.csv"]
    if monitors is not None:
        write_json(root / "monitors.json", monitors)
        written.append("monitors.json")
    return written


def read_trajectory_states(root):
    """Return ``(grid, boundary data, times, states)`` from a trajectory archive."""
    root = Path(root)
    grid, _, bvars, header = read_snapshot(root / "boundary.fsnp")
    bd = boundary_from_variables(bvars, grid, header.get("extra", {}).get("rho_floor", 1e-3))
    times, states = [], []
    for p in sorted((root / "snapshots").glob("state_*.fsnp")):
        _, t, variables, _ = read_snapshot(p)
        times.append(t)
        states.append(state_from_variables(variables, grid))
    return grid, bd, np.array(times), states


def read_energy_trace(root):
    header, rows = read_csv(Path(root) / "energy_trace.csv")
    return np.array([[float(v) for v in r] for r in rows])
