"""Structured grids, field states, boundary data and spectral projections.

Fields are cell averages stored in row-major (``indexing="ij"``) order:
density has shape ``grid.cells`` and momentum ``grid.cells + (dim,)``.
Boundary faces are enumerated side by side in the order
``x-, x+`` (1D) or ``x-, x+, y-, y+`` (2D); along each side faces follow
the increasing index of the tangential axis.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .eos import DomainError, EosParams, energy_density_field

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple
    cells: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"only 1D and 2D grids are supported, got dim={self.dim}")
        if len(self.extents) != self.dim or len(self.cells) != self.dim:
            raise DomainError("extents and cells must have one entry per axis")
        for L, n in zip(self.extents, self.cells):
            if not L > 0:
                raise DomainError(f"extent must be positive, got {L}")
            if int(n) != n or n < 4:
                raise DomainError(f"need at least 4 cells per axis, got {n}")

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def cell_centers(self) -> np.ndarray:
        """Coordinates of cell centres, shape ``cells + (dim,)``."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    # boundary faces ------------------------------------------------------
    def sides(self):
        """Yield ``(name, axis, sign, count)`` per boundary side, in face order."""
        out = []
        for axis in range(self.dim):
            count = self.cells[1 - axis] if self.dim == 2 else 1
            out.append(("xy"[axis] + "-", axis, -1, count))
            out.append(("xy"[axis] + "+", axis, +1, count))
        return out

    @property
    def n_boundary_faces(self) -> int:
        return sum(s[3] for s in self.sides())

    def side_slices(self) -> dict:
        slices, start = {}, 0
        for name, _, _, count in self.sides():
            slices[name] = slice(start, start + count)
            start += count
        return slices

    def boundary_normals(self) -> np.ndarray:
        normals = []
        for _, axis, sign, count in self.sides():
            n = np.zeros((count, self.dim))
            n[:, axis] = sign
            normals.append(n)
        return np.concatenate(normals)

    def boundary_areas(self) -> np.ndarray:
        areas = []
        for _, axis, _, count in self.sides():
            a = self.spacing[1 - axis] if self.dim == 2 else 1.0
            areas.append(np.full(count, a))
        return np.concatenate(areas)

    def boundary_centers(self) -> np.ndarray:
        pts = []
        for _, axis, sign, count in self.sides():
            p = np.zeros((count, self.dim))
            p[:, axis] = 0.0 if sign < 0 else self.extents[axis]
            if self.dim == 2:
                p[:, 1 - axis] = self.axis_centers(1 - axis)
            pts.append(p)
        return np.concatenate(pts)

    def boundary_cell_index(self, name: str):
        """Index expression selecting the cells adjacent to a side."""
        axis = "xy".index(name[0])
        idx = 0 if name[1] == "-" else -1
        sl = [slice(None)] * self.dim
        sl[axis] = idx
        return tuple(sl)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "extents": list(self.extents), "cells": list(self.cells)}


def build_grid(dim: int, extents, cells) -> Grid:
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    cells = np.atleast_1d(cells)
    if np.any(cells <= 0):
        raise DomainError(f"cell counts must be positive, got {tuple(cells)}")
    return Grid(int(dim), extents, tuple(int(c) for c in cells))


@dataclass
class FieldState:
    rho: np.ndarray
    mom: np.ndarray

    def copy(self) -> "FieldState":
        return FieldState(self.rho.copy(), self.mom.copy())

    def velocity(self, fallback=None, eps: float = 1e-10) -> np.ndarray:
        u = self.mom / np.maximum(self.rho, eps)[..., None]
        if fallback is not None:
            vac = self.rho < eps
            if np.any(vac):
                u = np.where(vac[..., None], fallback, u)
        return u

    def total_mass(self, grid: Grid) -> float:
        return float(np.sum(self.rho) * grid.cell_volume)


def total_energy(state: FieldState, bd: "BoundaryData", eos: EosParams, grid: Grid) -> float:
    """Integral of the energy density relative to the boundary velocity lifting."""
    values, finite = energy_density_field(state.rho, state.mom, bd.u_cells, eos)
    if not np.all(finite):
        return float("inf")
    return float(np.sum(values) * grid.cell_volume)


@dataclass
class BoundaryData:
    """Boundary density, boundary velocity (faces and cell lifting) and body force."""

    rho_b: np.ndarray
    u_b: np.ndarray
    u_cells: np.ndarray
    g: np.ndarray
    rho_floor: float = 1e-3
    grid: Grid | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if np.any(self.rho_b < self.rho_floor) or not self.rho_floor > 0:
            raise DomainError("boundary density must stay above a positive floor")

    @classmethod
    def from_functions(
        cls,
        grid: Grid,
        rho_b: float | Callable = 1.0,
        u_b: Callable | None = None,
        g: Callable | None = None,
        rho_floor: float = 1e-3,
    ) -> "BoundaryData":
        """Sample boundary data from callables of the position ``x`` (shape ``(..., dim)``)."""
        xb = grid.boundary_centers()
        xc = grid.cell_centers()

        def vec(fn, x):
            if fn is None:
                return np.zeros(x.shape[:-1] + (grid.dim,))
            return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape[:-1] + (grid.dim,)).copy()

        rb = rho_b(xb) if callable(rho_b) else np.full(len(xb), float(rho_b))
        return cls(np.asarray(rb, dtype=float), vec(u_b, xb), vec(u_b, xc), vec(g, xc), rho_floor, grid)

    def same_as(self, other: "BoundaryData") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in [
                (self.rho_b, other.rho_b),
                (self.u_b, other.u_b),
                (self.u_cells, other.u_cells),
                (self.g, other.g),
            ]
        )

    def is_homogeneous(self) -> bool:
        return not np.any(self.u_b) and not np.any(self.u_cells)


@dataclass(frozen=True)
class BoundaryPartition:
    inflow: np.ndarray
    outflow: np.ndarray
    characteristic: np.ndarray


def classify_boundary(bd: BoundaryData, grid: Grid, tol: float = BOUNDARY_TOL) -> BoundaryPartition:
    """Split boundary faces by the sign of ``u_B . n`` (inflow where negative)."""
    un = np.sum(bd.u_b * grid.boundary_normals(), axis=-1)
    scale = max(float(np.max(np.abs(bd.u_b))) if bd.u_b.size else 0.0, 1.0)
    inflow = un < -tol * scale
    outflow = un > tol * scale
    return BoundaryPartition(inflow, outflow, ~(inflow | outflow))


# spectral basis ---------------------------------------------------------
@dataclass(frozen=True)
class SpectralBasis:
    grid: Grid
    scalar_modes: np.ndarray  # (M,) + cells
    eigenvalues: np.ndarray
    vector_modes: np.ndarray  # (M,) + cells + (dim,)
    vector_eigenvalues: np.ndarray
    mode_indices: tuple = field(default=())

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def dirichlet_eigenvalue(k: int, n: int, h: float) -> float:
    """k-th eigenvalue of the cell-centred 1D Dirichlet Laplacian with n cells."""
    return 2.0 / h**2 * (1.0 - np.cos(k * np.pi / n))


def build_spectral_basis(grid: Grid, M: int) -> SpectralBasis:
    """First ``M`` Dirichlet eigenmodes of the cell-centred discrete Laplacian.

    Zero face values are imposed through odd reflection into ghost cells, so
    ``sin(k pi x / L)`` sampled at cell centres is an exact eigenvector with
    eigenvalue ``2/h^2 (1 - cos(k pi h / L))``. In 2D the modes are tensor
    products, sorted by eigenvalue and then by index pair. Vector modes are
    scalar modes times a unit coordinate vector.
    """
    if M < 1 or M > grid.n_cells:
        raise DomainError(f"mode count must lie in [1, {grid.n_cells}], got {M}")
    n = grid.cells
    h = grid.spacing
    one_d = []
    for a in range(grid.dim):
        k = np.arange(1, n[a] + 1)
        lam = np.array([dirichlet_eigenvalue(j, n[a], h[a]) for j in k])
        x = grid.axis_centers(a)
        vecs = np.sin(np.outer(k, x) * np.pi / grid.extents[a])
        one_d.append((k, lam, vecs))
    if grid.dim == 1:
        k, lam, vecs = one_d[0]
        entries = [(lam[i], (int(k[i]),), vecs[i]) for i in range(len(k))]
    else:
        (kx, lx, vx), (ky, ly, vy) = one_d
        pairs = [(lx[i] + ly[j], i, j) for i in range(len(kx)) for j in range(len(ky))]
        pairs.sort()
        pairs = pairs[: max(M, 1)]
        entries = [(lam, (int(kx[i]), int(ky[j])), np.outer(vx[i], vy[j])) for lam, i, j in pairs]
    entries.sort(key=lambda e: (e[0], e[1]))
    entries = entries[:M]
    vol = grid.cell_volume
    modes = np.array([e[2] / np.sqrt(np.sum(e[2] ** 2) * vol) for e in entries])
    eig = np.array([e[0] for e in entries])
    # vector family: (scalar mode, component) pairs in eigenvalue order
    vmodes, veig = [], []
    for i in range(M):
        for c in range(grid.dim):
            w = np.zeros(grid.cells + (grid.dim,))
            w[..., c] = modes[i]
            vmodes.append(w)
            veig.append(eig[i])
            if len(vmodes) == M:
                break
        if len(vmodes) == M:
            break
    return SpectralBasis(
        grid, modes, eig, np.array(vmodes), np.array(veig), tuple(e[1] for e in entries)
    )


def project_scalar(field_values: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    field_values = np.asarray(field_values, dtype=float)
    if field_values.shape != basis.grid.cells:
        raise DomainError(f"field shape {field_values.shape} does not match grid {basis.grid.cells}")
    axes = tuple(range(1, basis.grid.dim + 1))
    return np.sum(basis.scalar_modes * field_values, axis=axes) * basis.grid.cell_volume


def project_vector(field_values: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    field_values = np.asarray(field_values, dtype=float)
    if field_values.shape != basis.grid.cells + (basis.grid.dim,):
        raise DomainError(f"field shape {field_values.shape} does not match grid {basis.grid.cells}")
    axes = tuple(range(1, basis.grid.dim + 2))
    return np.sum(basis.vector_modes * field_values, axis=axes) * basis.grid.cell_volume


def reconstruct_scalar(coeffs: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    return np.tensordot(np.asarray(coeffs, dtype=float), basis.scalar_modes, axes=1)


def ghost_extend(values: np.ndarray, grid: Grid, faces: np.ndarray) -> np.ndarray:
    """Pad a cell field by one ghost layer so that face averages equal ``faces``.

    ``values`` has shape ``cells + tail``; ``faces`` holds the prescribed face
    values in boundary-face order with shape ``(n_boundary_faces,) + tail``.
    In 2D the corner ghosts make the average of the four cells meeting at a
    domain corner equal to the mean of the two adjacent face values.
    """
    tail = values.shape[grid.dim :]
    ext = np.zeros(tuple(n + 2 for n in grid.cells) + tail)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    ext[inner] = values
    sl = grid.side_slices()
    if grid.dim == 1:
        ext[0] = 2.0 * faces[sl["x-"]][0] - values[0]
        ext[-1] = 2.0 * faces[sl["x+"]][0] - values[-1]
        return ext
    ext[0, 1:-1] = 2.0 * faces[sl["x-"]] - values[0, :]
    ext[-1, 1:-1] = 2.0 * faces[sl["x+"]] - values[-1, :]
    ext[1:-1, 0] = 2.0 * faces[sl["y-"]] - values[:, 0]
    ext[1:-1, -1] = 2.0 * faces[sl["y+"]] - values[:, -1]
    for ci, cj in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
        xs = sl["x-"] if ci == 0 else sl["x+"]
        ys = sl["y-"] if cj == 0 else sl["y+"]
        fx = faces[xs][0 if cj == 0 else -1]
        fy = faces[ys][0 if ci == 0 else -1]
        corner_value = 0.5 * (fx + fy)
        ii = 1 if ci == 0 else -2
        jj = 1 if cj == 0 else -2
        ext[ci, cj] = 4.0 * corner_value - ext[ii, jj] - ext[ci, jj] - ext[ii, cj]
    return ext


# field snapshot file format ---------------------------------------------
SNAPSHOT_MAGIC = b"FSNP"


def write_snapshot(path, grid: Grid, time: float, variables: dict, extra: dict | None = None) -> None:
    """Write a snapshot: magic, uint32 header length, JSON header, float64 LE blocks."""
    names = list(variables)
    arrays = [np.ascontiguousarray(np.asarray(variables[k], dtype="<f8")) for k in names]
    header = {
        "grid": grid.to_dict(),
        "time": float(time),
        "variables": [{"name": k, "shape": list(a.shape)} for k, a in zip(names, arrays)],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def read_snapshot(path):
    """Return ``(grid, time, variables, header)`` from a snapshot file."""
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + n].decode())
    g = header["grid"]
    grid = build_grid(g["dim"], g["extents"], g["cells"])
    offset = 8 + n
    variables = {}
    for v in header["variables"]:
        count = int(np.prod(v["shape"])) if v["shape"] else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(v["shape"])
        variables[v["name"]] = arr.astype(float)
        offset += 8 * count
    return grid, header["time"], variables, header


def state_variables(state: FieldState, grid: Grid) -> dict:
    out = {"rho": state.rho}
    for c in range(grid.dim):
        out["mom_" + "xy"[c]] = state.mom[..., c]
    return out


def state_from_variables(variables: dict, grid: Grid) -> FieldState:
    mom = np.stack([variables["mom_" + "xy"[c]] for c in range(grid.dim)], axis=-1)
    return FieldState(np.array(variables["rho"]), mom)


def boundary_variables(bd: BoundaryData, grid: Grid) -> dict:
    out = {"rho_b": bd.rho_b}
    for c in range(grid.dim):
        ax = "xy"[c]
        out["u_b_" + ax] = bd.u_b[:, c]
        out["u_cells_" + ax] = bd.u_cells[..., c]
        out["g_" + ax] = bd.g[..., c]
    return out


def boundary_from_variables(variables: dict, grid: Grid, rho_floor: float = 1e-3) -> BoundaryData:
    def stack(prefix):
        return np.stack([variables[prefix + "xy"[c]] for c in range(grid.dim)], axis=-1)

    return BoundaryData(
        np.array(variables["rho_b"]), stack("u_b_"), stack("u_cells_"), stack("g_"), rho_floor, grid
    )
