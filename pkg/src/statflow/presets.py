"""Named boundary-data and initial-data presets used by configurations.

Boundary presets
    ``wall``     u_B = 0, g = 0
    ``channel``  u_B = (U, 0) everywhere, inflow density ``rho_b`` (1D or 2D)
    ``gravity``  u_B = 0, g = grad G with G(x) = strength * x
    ``lid``      2D cavity, u_B = (U (y/H)^2, 0): moving top, tangential sides
    ``mms``      the manufactured channel solution (1D)

Initial presets
    ``uniform``  rho = rho0, m = rho0 * u_B lifting
    ``wave``     rho = rho0 (1 + A cos(pi x / L)), m = rho B sin(pi x / L) (x-component)
    ``mms``      manufactured solution at t = 0
"""

from __future__ import annotations

import numpy as np

from .config import ConfigError, build_grid_from, eos_from
from .grid import BoundaryData, FieldState, Grid
from .mms import ManufacturedChannel

BOUNDARY_PRESETS = ("wall", "channel", "gravity", "lid", "mms")
INITIAL_PRESETS = ("uniform", "wave", "mms")


def _params(section: dict, allowed: dict, path: str) -> dict:
    given = section.get("params", {}) or {}
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.params", f"unknown parameters {sorted(unknown)}; allowed {sorted(allowed)}")
    out = dict(allowed)
    out.update(given)
    return out


def manufactured(cfg: dict) -> ManufacturedChannel:
    p = _params(cfg["boundary"], {"rho0": 2.0, "amplitude": 0.1, "speed": 1.0, "bulge": 0.5}, "boundary")
    if cfg["grid"]["dim"] != 1:
        raise ConfigError("boundary.preset", "the mms preset is one-dimensional")
    return ManufacturedChannel(
        eos_from(cfg),
        lam=float(cfg["solver"]["lambda"]),
        mu=float(cfg["solver"]["mu"]),
        length=float(cfg["grid"]["extents"][0]),
        **{k: float(v) for k, v in p.items()},
    )


def build_boundary(cfg: dict, grid: Grid | None = None):
    """Return ``(boundary data, forcing or None)``."""
    grid = grid or build_grid_from(cfg)
    b = cfg["boundary"]
    name = b.get("preset", "wall")
    if name == "wall":
        _params(b, {}, "boundary")
        return BoundaryData.from_functions(grid), None
    if name == "channel":
        p = _params(b, {"speed": 1.0, "rho_b": 1.0}, "boundary")
        U = float(p["speed"])

        def ub(x):
            out = np.zeros(x.shape)
            out[..., 0] = U
            return out

        return BoundaryData.from_functions(grid, rho_b=float(p["rho_b"]), u_b=ub), None
    if name == "gravity":
        p = _params(b, {"strength": 1.0}, "boundary")
        s = float(p["strength"])

        def g(x):
            out = np.zeros(x.shape)
            out[..., 0] = s
            return out

        return BoundaryData.from_functions(grid, g=g), None
    if name == "lid":
        if grid.dim != 2:
            raise ConfigError("boundary.preset", "the lid preset needs a 2D grid")
        p = _params(b, {"speed": 1.0}, "boundary")
        U, H = float(p["speed"]), grid.extents[1]

        def lid(x):
            out = np.zeros(x.shape)
            out[..., 0] = U * (x[..., 1] / H) ** 2
            return out

        return BoundaryData.from_functions(grid, u_b=lid), None
    if name == "mms":
        m = manufactured(cfg)
        return m.boundary(grid), m
    raise ConfigError("boundary.preset", f"unknown preset {name!r}; choose from {BOUNDARY_PRESETS}")


def potential(cfg: dict, grid: Grid) -> np.ndarray | None:
    """Cell values of G for the gravity preset (g = grad G), else None."""
    if cfg["boundary"].get("preset") != "gravity":
        return None
    s = float(_params(cfg["boundary"], {"strength": 1.0}, "boundary")["strength"])
    return s * grid.cell_centers()[..., 0]


def build_initial(cfg: dict, bd: BoundaryData, grid: Grid | None = None) -> FieldState:
    grid = grid or build_grid_from(cfg)
    ini = cfg["initial"]
    name = ini.get("preset", "wave")
    if name == "uniform":
        p = _params(ini, {"rho0": 1.0}, "initial")
        rho = np.full(grid.cells, float(p["rho0"]))
        return FieldState(rho, rho[..., None] * bd.u_cells)
    if name == "wave":
        p = _params(ini, {"rho0": 1.0, "density_amplitude": 0.2, "velocity_amplitude": 0.3}, "initial")
        x = grid.cell_centers()
        arg = np.pi * x[..., 0] / grid.extents[0]
        rho = float(p["rho0"]) * (1.0 + float(p["density_amplitude"]) * np.cos(arg))
        shape = np.sin(arg)
        for a in range(1, grid.dim):
            shape = shape * np.sin(np.pi * x[..., a] / grid.extents[a])
        mom = rho[..., None] * bd.u_cells
        mom[..., 0] += rho * float(p["velocity_amplitude"]) * shape
        return FieldState(rho, mom)
    if name == "mms":
        _params(ini, {}, "initial")
        return manufactured(cfg).state(0.0, grid)
    raise ConfigError("initial.preset", f"unknown preset {name!r}; choose from {INITIAL_PRESETS}")
