"""Explicit finite-volume integrator for barotropic compressible Navier-Stokes.

The scheme is collocated: cell averages of density and momentum, Rusanov
convective fluxes, second-order central viscous stresses and Heun (SSP-RK2)
time stepping.

Boundary faces are treated according to the sign of ``u_B . n``:

* inflow faces use the face state ``(rho_B, u_B)``;
* outflow faces use ``(rho_interior, u_B)``, i.e. upwinded density;
* the remaining faces use a Rusanov flux against a mirror ghost whose normal
  velocity equals ``u_B . n``, so no mass crosses them.

Viscous ghosts are ``2 u_B - u`` so the face average of velocity is ``u_B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .eos import EosParams, pressure, pressure_potential, potential_derivative, sound_speed
from .grid import (
    BoundaryData,
    FieldState,
    Grid,
    classify_boundary,
    ghost_extend,
    total_energy,
)

VACUUM_EPS = 1e-10


class StepRejected(RuntimeError):
    """A stage produced negative density; the caller should retry with a smaller step."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Physical and numerical parameters of a run.

    ``lam`` is the bulk viscosity. ``dt`` fixes the time step instead of the
    CFL rule (steps are still clipped to land on output times).
    """

    mu: float = 0.01
    lam: float = 0.0
    eos: EosParams = field(default_factory=EosParams)
    cfl: float = 0.4
    t_end: float = 1.0
    artificial_dissipation: float = 1.0
    dt: float | None = None
    max_halvings: int = 8
    energy_tol: float = 1e-8

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear viscosity must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"bulk viscosity must be nonnegative, got {self.lam}")
        if not 0 < self.cfl < 1:
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.artificial_dissipation >= 0:
            raise ValueError("artificial dissipation must be nonnegative")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("fixed dt must be positive")


class Forcing(Protocol):
    """Optional time-dependent sources; any method may be omitted."""

    def mass_source(self, t: float, grid: Grid) -> np.ndarray: ...

    def momentum_source(self, t: float, grid: Grid) -> np.ndarray: ...

    def inflow_density(self, t: float, grid: Grid, bd: BoundaryData) -> np.ndarray: ...


def viscous_stress(G: np.ndarray, mu: float, lam: float, dim: int) -> np.ndarray:
    """``S = mu (G + G^T - (2/d) div u I) + lam div u I`` with ``G[..., i, j] = d_j u_i``."""
    div = np.trace(G, axis1=-2, axis2=-1)
    eye = np.eye(dim)
    return mu * (G + np.swapaxes(G, -1, -2) - (2.0 / dim) * div[..., None, None] * eye) + (
        lam * div[..., None, None] * eye
    )


def _index(dim: int, axis: int, item) -> tuple:
    sl = [slice(None)] * dim
    sl[axis] = item
    return tuple(sl)


def _physical_flux(rho, mom, u, p, axis):
    """Flux along ``+e_axis`` of (mass, momentum)."""
    fr = mom[..., axis]
    fm = mom * u[..., axis : axis + 1]
    fm[..., axis] += p
    return fr, fm


def _rusanov(left, right, axis, alpha):
    rl, ml, ul, pl, cl = left
    rr, mr, ur, pr, cr = right
    frl, fml = _physical_flux(rl, ml, ul, pl, axis)
    frr, fmr = _physical_flux(rr, mr, ur, pr, axis)
    s = alpha * np.maximum(np.abs(ul[..., axis]) + cl, np.abs(ur[..., axis]) + cr)
    fr = 0.5 * (frl + frr) - 0.5 * s * (rr - rl)
    fm = 0.5 * (fml + fmr) - 0.5 * s[..., None] * (mr - ml)
    return fr, fm


def cell_gradient(values: np.ndarray, grid: Grid, faces: np.ndarray) -> np.ndarray:
    """Central-difference gradient of a vector field, ``G[..., i, j] = d_j f_i``.

    Ghost values come from :func:`ghost_extend` with face values ``faces``.
    """
    ext = ghost_extend(values, grid, faces)
    G = np.zeros(values.shape + (grid.dim,))
    for a in range(grid.dim):
        h = grid.spacing[a]
        hi = [slice(1, -1)] * grid.dim
        lo = [slice(1, -1)] * grid.dim
        hi[a] = slice(2, None)
        lo[a] = slice(None, -2)
        G[..., a] = (ext[tuple(hi)] - ext[tuple(lo)]) / (2.0 * h)
    return G


@dataclass
class StepAux:
    """Boundary bookkeeping of one right-hand-side evaluation."""

    mass_out: np.ndarray  # outward mass flux times face area, per boundary face
    momentum_out: np.ndarray  # outward momentum flux (convective and viscous), summed
    mass_source: float
    momentum_source: np.ndarray


class Operator:
    """Semi-discrete right-hand side bound to a grid, boundary data and config."""

    def __init__(self, grid: Grid, bd: BoundaryData, cfg: SolverConfig, forcing=None):
        self.grid = grid
        self.bd = bd
        self.cfg = cfg
        self.forcing = forcing
        self.partition = classify_boundary(bd, grid)
        self.normals = grid.boundary_normals()
        self.areas = grid.boundary_areas()
        self.slices = grid.side_slices()
        self.sides = grid.sides()
        self.un = np.sum(bd.u_b * self.normals, axis=-1)
        # trapezoid weights over the vertices (2D) or faces (1D) of the viscous stencil
        w = [np.ones(n + 1) for n in grid.cells]
        for wa in w:
            wa[0] = wa[-1] = 0.5
        self.vertex_weights = w[0] if grid.dim == 1 else np.outer(w[0], w[1])

    # sources ---------------------------------------------------------------
    def _forcing(self, name, t, *args):
        fn = getattr(self.forcing, name, None) if self.forcing is not None else None
        return None if fn is None else fn(t, self.grid, *args)

    def inflow_density(self, t: float) -> np.ndarray:
        rb = self._forcing("inflow_density", t, self.bd)
        return self.bd.rho_b if rb is None else np.asarray(rb, dtype=float)

    def velocity(self, rho, mom):
        u = mom / np.maximum(rho, VACUUM_EPS)[..., None]
        vac = rho < VACUUM_EPS
        if np.any(vac):
            u = np.where(vac[..., None], self.bd.u_cells, u)
        return u

    # viscous part ------------------------------------------------------------
    def vertex_gradient(self, u):
        """Velocity gradient on faces (1D) or vertices (2D)."""
        g = self.grid
        ext = ghost_extend(u, g, self.bd.u_b)
        if g.dim == 1:
            return (np.diff(ext, axis=0) / g.spacing[0])[..., None]
        hx, hy = g.spacing
        dx = (ext[1:, :-1] + ext[1:, 1:] - ext[:-1, :-1] - ext[:-1, 1:]) / (2.0 * hx)
        dy = (ext[:-1, 1:] + ext[1:, 1:] - ext[:-1, :-1] - ext[1:, :-1]) / (2.0 * hy)
        return np.stack([dx, dy], axis=-1)

    def viscous(self, u):
        """Return ``(div S per cell, S, G)`` with ``S`` and ``G`` on the stencil points."""
        g = self.grid
        G = self.vertex_gradient(u)
        S = viscous_stress(G, self.cfg.mu, self.cfg.lam, g.dim)
        if g.dim == 1:
            div = np.diff(S[..., 0], axis=0) / g.spacing[0]
            return div, S, G
        hx, hy = g.spacing
        sx, sy = S[..., 0], S[..., 1]
        div = (sx[1:, :-1] + sx[1:, 1:] - sx[:-1, :-1] - sx[:-1, 1:]) / (2.0 * hx)
        div = div + (sy[:-1, 1:] + sy[1:, 1:] - sy[:-1, :-1] - sy[1:, :-1]) / (2.0 * hy)
        return div, S, G

    def dissipation(self, S, G) -> float:
        """Discrete ``int S : grad u`` matching the kinetic-energy loss of the stencil."""
        local = np.sum(S * G, axis=(-1, -2))
        return float(np.sum(self.vertex_weights * local) * self.grid.cell_volume)

    def _viscous_boundary_momentum(self, S) -> np.ndarray:
        """Outward momentum flux ``-int_bdry S n`` of the viscous stencil."""
        g = self.grid
        if g.dim == 1:
            return -(S[-1, :, 0] - S[0, :, 0])
        hx, hy = g.spacing
        wy = np.full(g.cells[1] + 1, hy)
        wy[0] = wy[-1] = 0.5 * hy
        wx = np.full(g.cells[0] + 1, hx)
        wx[0] = wx[-1] = 0.5 * hx
        total = wy @ (S[-1, :, :, 0] - S[0, :, :, 0]) + wx @ (S[:, -1, :, 1] - S[:, 0, :, 1])
        return -total

    # convective part -----------------------------------------------------------
    def _boundary_flux(self, rho, mom, u, p, c, t):
        """Outward fluxes through every boundary face, in boundary-face order."""
        g = self.grid
        eos = self.cfg.eos
        alpha = self.cfg.artificial_dissipation
        rho_in = self.inflow_density(t)
        nb = g.n_boundary_faces
        fr_out = np.zeros(nb)
        fm_out = np.zeros((nb, g.dim))
        for name, axis, sign, count in self.sides:
            sl = self.slices[name]
            idx = g.boundary_cell_index(name)
            r = rho[idx].reshape(count)
            m = mom[idx].reshape(count, g.dim)
            uc = u[idx].reshape(count, g.dim)
            pc = p[idx].reshape(count)
            cc = c[idx].reshape(count)
            ub = self.bd.u_b[sl]
            un = self.un[sl]
            n = self.normals[sl]
            inflow = self.partition.inflow[sl]
            outflow = self.partition.outflow[sl]
            # physical flux of the face state (rho_face, u_B)
            r_face = np.where(inflow, rho_in[sl], r)
            mass_phys = r_face * un
            mom_phys = (r_face * un)[:, None] * ub + pressure(r_face, eos)[:, None] * n
            # mirror ghost for characteristic faces
            mg = m.copy()
            mg[:, axis] = -m[:, axis] + 2.0 * r * ub[:, axis]
            ug = mg / np.maximum(r, VACUUM_EPS)[:, None]
            interior = (r, m, uc, pc, cc)
            ghost = (r, mg, ug, pc, cc)
            if sign < 0:
                fr, fm = _rusanov(ghost, interior, axis, alpha)
            else:
                fr, fm = _rusanov(interior, ghost, axis, alpha)
            fr, fm = sign * fr, sign * fm
            phys = inflow | outflow
            fr_out[sl] = np.where(phys, mass_phys, fr)
            fm_out[sl] = np.where(phys[:, None], mom_phys, fm)
        return fr_out, fm_out

    def rhs(self, rho, mom, t):
        """Time derivatives of ``(rho, mom)`` and the boundary bookkeeping."""
        g = self.grid
        eos = self.cfg.eos
        alpha = self.cfg.artificial_dissipation
        u = self.velocity(rho, mom)
        p = pressure(rho, eos)
        c = sound_speed(rho, eos)
        drho = np.zeros_like(rho)
        dmom = np.zeros_like(mom)
        fr_out, fm_out = self._boundary_flux(rho, mom, u, p, c, t)
        for axis in range(g.dim):
            lo = _index(g.dim, axis, slice(None, -1))
            hi = _index(g.dim, axis, slice(1, None))
            fr, fm = _rusanov(
                (rho[lo], mom[lo], u[lo], p[lo], c[lo]),
                (rho[hi], mom[hi], u[hi], p[hi], c[hi]),
                axis,
                alpha,
            )
            # boundary fluxes expressed along +e_axis
            sl_lo = self.slices["xy"[axis] + "-"]
            sl_hi = self.slices["xy"[axis] + "+"]
            shape = list(rho.shape)
            shape[axis] = 1
            bl_r = (-fr_out[sl_lo]).reshape(shape)
            bh_r = fr_out[sl_hi].reshape(shape)
            bl_m = (-fm_out[sl_lo]).reshape(shape + [g.dim])
            bh_m = fm_out[sl_hi].reshape(shape + [g.dim])
            Fr = np.concatenate([bl_r, fr, bh_r], axis=axis)
            Fm = np.concatenate([bl_m, fm, bh_m], axis=axis)
            h = g.spacing[axis]
            drho -= np.diff(Fr, axis=axis) / h
            dmom -= np.diff(Fm, axis=axis) / h
        div_s, S, _ = self.viscous(u)
        dmom += div_s
        dmom += rho[..., None] * self.bd.g
        vol = g.cell_volume
        src_m = rho[..., None] * self.bd.g
        s = self._forcing("mass_source", t)
        f = self._forcing("momentum_source", t)
        mass_src = 0.0
        if s is not None:
            drho += s
            mass_src = float(np.sum(s) * vol)
        if f is not None:
            dmom += f
            src_m = src_m + f
        aux = StepAux(
            mass_out=fr_out * self.areas,
            momentum_out=np.sum(fm_out * self.areas[:, None], axis=0)
            + self._viscous_boundary_momentum(S),
            mass_source=mass_src,
            momentum_source=np.sum(src_m.reshape(-1, g.dim), axis=0) * vol,
        )
        return drho, dmom, aux

    # step control ------------------------------------------------------------------
    def stable_dt(self, state: FieldState) -> float:
        g = self.grid
        u = self.velocity(state.rho, state.mom)
        c = sound_speed(state.rho, self.cfg.eos)
        rate = 0.0
        for a in range(g.dim):
            rate = max(rate, float(np.max(np.abs(u[..., a]) + c)) / g.spacing[a])
        dt = self.cfg.cfl / rate if rate > 0 else np.inf
        nu = (2.0 * self.cfg.mu + self.cfg.lam) / max(float(np.min(state.rho)), self.bd.rho_floor)
        inv_h2 = sum(1.0 / h**2 for h in g.spacing)
        return min(dt, self.cfg.cfl / (2.0 * nu * inv_h2))

    def heun(self, state: FieldState, t: float, dt: float):
        """One SSP-RK2 step; returns the new state and stage-averaged bookkeeping."""
        r0, m0 = state.rho, state.mom
        dr0, dm0, a0 = self.rhs(r0, m0, t)
        r1 = r0 + dt * dr0
        m1 = m0 + dt * dm0
        _check_stage(r1, m1, t, dt)
        dr1, dm1, a1 = self.rhs(r1, m1, t + dt)
        r2 = 0.5 * r0 + 0.5 * (r1 + dt * dr1)
        m2 = 0.5 * m0 + 0.5 * (m1 + dt * dm1)
        _check_stage(r2, m2, t, dt)
        aux = StepAux(
            0.5 * (a0.mass_out + a1.mass_out),
            0.5 * (a0.momentum_out + a1.momentum_out),
            0.5 * (a0.mass_source + a1.mass_source),
            0.5 * (a0.momentum_source + a1.momentum_source),
        )
        return FieldState(r2, m2), aux

    # energy balance terms ---------------------------------------------------------
    def energy_rates(self, state: FieldState, t: float) -> dict:
        """Terms of the energy balance evaluated at one state.

        Returns ``dissipation`` (int S:grad u), ``boundary`` (P-flux through
        in/outflow faces) and ``source`` (the right-hand side driven by u_B, g
        and the forcing). The balance reads
        ``dE/dt + dissipation + boundary <= source``.
        """
        g = self.grid
        eos = self.cfg.eos
        rho, mom = state.rho, state.mom
        u = self.velocity(rho, mom)
        _, S, G = self.viscous(u)
        diss = self.dissipation(S, G)
        idx_cells = np.zeros(g.n_boundary_faces, dtype=float)
        for name, _, _, count in self.sides:
            idx_cells[self.slices[name]] = rho[g.boundary_cell_index(name)].reshape(count)
        rho_in = self.inflow_density(t)
        rho_face = np.where(self.partition.inflow, rho_in, idx_cells)
        phys = self.partition.inflow | self.partition.outflow
        boundary = float(np.sum(np.where(phys, pressure_potential(rho_face, eos) * self.un, 0.0) * self.areas))

        vol = g.cell_volume
        ub = self.bd.u_cells
        rel = u - ub
        source = float(np.sum(rho[..., None] * self.bd.g * rel) * vol)
        if np.any(self.bd.u_b) or np.any(ub):
            Gb = cell_gradient(ub, g, self.bd.u_b)
            Gc = cell_gradient(u, g, self.bd.u_b)
            Sc = viscous_stress(Gc, self.cfg.mu, self.cfg.lam, g.dim)
            p = pressure(rho, eos)
            flux = rho[..., None, None] * u[..., :, None] * u[..., None, :]
            flux = flux + p[..., None, None] * np.eye(g.dim)
            half_grad = np.einsum("...i,...ij->...j", ub, Gb)  # grad(|u_B|^2 / 2)
            source += float(
                np.sum(
                    -np.sum(flux * Gb, axis=(-1, -2))
                    + rho * np.sum(u * half_grad, axis=-1)
                    + np.sum(Sc * Gb, axis=(-1, -2))
                )
                * vol
            )
        s = self._forcing("mass_source", t)
        f = self._forcing("momentum_source", t)
        if f is not None:
            source += float(np.sum(f * rel) * vol)
        if s is not None:
            dE = potential_derivative(np.clip(rho, 0, None), eos) - 0.5 * np.sum(u**2, -1) + 0.5 * np.sum(ub**2, -1)
            source += float(np.sum(s * dE) * vol)
        return {"dissipation": diss, "boundary": boundary, "source": source}


def _check_stage(rho, mom, t, dt):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(mom))):
        raise SolverError(f"non-finite values in step from t={t} with dt={dt}")
    if np.any(rho < 0):
        raise StepRejected(f"negative density {float(np.min(rho)):.3e} in step from t={t} with dt={dt}")


def step(
    state: FieldState,
    bd: BoundaryData,
    cfg: SolverConfig,
    dt: float,
    grid: Grid | None = None,
    t: float = 0.0,
    forcing=None,
) -> FieldState:
    """Advance ``state`` by one Heun step of size ``dt``.

    Raises :class:`StepRejected` when a stage loses positivity.
    """
    return Operator(grid or bd.grid, bd, cfg, forcing).heun(state, t, dt)[0]


# energy trace ------------------------------------------------------------------
@dataclass
class EnergyTrace:
    """Left-continuous piecewise-linear energy trace with downward jumps.

    On ``(t_k, t_{k+1}]`` the trace interpolates linearly between the right
    value at ``t_k`` and the left value at ``t_{k+1}``. For ``t`` up to the
    first breakpoint it equals ``initial_value``.
    """

    breakpoints: np.ndarray
    left_values: np.ndarray
    right_values: np.ndarray
    initial_value: float
    jump_tol: float = 0.0

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.left_values = np.array(self.left_values, dtype=float)
        self.right_values = np.array(self.right_values, dtype=float)
        n = len(self.breakpoints)
        if n == 0 or len(self.left_values) != n or len(self.right_values) != n:
            raise ValueError("breakpoints and values must be nonempty and of equal length")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.left_values[0] = self.initial_value
        self.right_values[0] = min(self.right_values[0], self.initial_value)
        if np.any(self.right_values > self.left_values + self.jump_tol):
            raise ValueError("energy trace may only jump downward")

    def value(self, t):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        b = self.breakpoints
        k = np.searchsorted(b, ts, side="left")  # b[k-1] < t <= b[k]
        out = np.full(ts.shape, self.initial_value)
        inside = (k >= 1) & (k < len(b))
        if np.any(inside):
            kk = k[inside]
            theta = (ts[inside] - b[kk - 1]) / (b[kk] - b[kk - 1])
            v0 = self.right_values[kk - 1]
            out[inside] = v0 + theta * (self.left_values[kk] - v0)
        out[k >= len(b)] = self.right_values[-1]
        return float(out[0]) if np.ndim(t) == 0 else out

    def right_limit(self, t):
        k = np.searchsorted(self.breakpoints, t)
        if k < len(self.breakpoints) and self.breakpoints[k] == t:
            return float(self.right_values[k])
        return float(self.value(t))

    def total_variation(self) -> float:
        jumps = np.abs(self.left_values - self.right_values)
        drift = np.abs(self.left_values[1:] - self.right_values[:-1])
        return float(np.sum(jumps) + np.sum(drift))

    def is_nonincreasing(self, tol: float = 0.0) -> bool:
        seq = np.empty(2 * len(self.breakpoints))
        seq[0::2] = self.left_values
        seq[1::2] = self.right_values
        return bool(np.all(np.diff(seq) <= tol))


@dataclass
class Trajectory:
    grid: Grid
    bd: BoundaryData
    cfg: SolverConfig
    times: np.ndarray
    states: list
    energy_trace: EnergyTrace
    residual_log: dict
    step_times: np.ndarray
    step_states: list
    step_rates: dict = field(default_factory=dict)
    boundary_mass_flux: np.ndarray | None = None
    forcing: object = None
    energy_record: np.ndarray | None = None  # overrides state energies (synthetic records)

    @property
    def energy0(self) -> float:
        return self.energy_trace.initial_value

    def state_at(self, t: float) -> FieldState:
        k = int(np.searchsorted(self.times, t))
        if k >= len(self.times) or self.times[k] != t:
            raise KeyError(f"time {t} is not an output time")
        return self.states[k]

    def state_energies(self) -> np.ndarray:
        """Energy functional of the state at each output time."""
        if self.energy_record is not None:
            return np.asarray(self.energy_record, dtype=float)
        return np.array([total_energy(s, self.bd, self.cfg.eos, self.grid) for s in self.states])

    def output_step_indices(self) -> np.ndarray:
        return np.searchsorted(self.step_times, self.times)

    @classmethod
    def synthetic(cls, times, energies, trace: EnergyTrace | None = None, grid: Grid | None = None):
        """Trajectory carrying only an energy record, for selection tests.

        ``energies`` are the state energies at ``times``; ``trace`` defaults to
        the piecewise-linear trace through them. States are placeholders.
        """
        from .grid import build_grid

        grid = grid or build_grid(1, 1.0, 4)
        bd = BoundaryData.from_functions(grid)
        times = np.asarray(times, dtype=float)
        energies = np.asarray(energies, dtype=float)
        cfg = SolverConfig(t_end=max(float(times[-1]), 1.0))
        states = [FieldState(np.ones(grid.cells), np.zeros(grid.cells + (grid.dim,))) for _ in times]
        if trace is None:
            trace = EnergyTrace(times, energies, energies, float(energies[0]))
        return cls(grid, bd, cfg, times, states, trace, {}, times, states, energy_record=energies)


def integrate(
    initial: FieldState,
    bd: BoundaryData,
    cfg: SolverConfig,
    output_times,
    grid: Grid | None = None,
    forcing=None,
    energy0: float | None = None,
) -> Trajectory:
    """Integrate from ``output_times[0]`` through every later output time.

    Steps are clipped to land exactly on output times. The run is
    deterministic: identical inputs give bit-identical trajectories, and a
    run restarted from an output state reproduces the remaining steps.
    """
    grid = grid or bd.grid
    if grid is None:
        raise ValueError("no grid given and boundary data carry none")
    times = np.asarray(output_times, dtype=float)
    if times.ndim != 1 or len(times) < 1:
        raise ValueError("output_times must be a nonempty sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("output_times must be strictly increasing")
    if times[0] < 0 or times[-1] > cfg.t_end * (1 + 1e-12):
        raise ValueError(f"output times must lie in [0, {cfg.t_end}]")
    if np.any(initial.rho < 0):
        raise ValueError("initial density must be nonnegative")
    op = Operator(grid, bd, cfg, forcing)
    state = initial.copy()
    t = float(times[0])
    E = total_energy(state, bd, cfg.eos, grid)
    if not np.isfinite(E):
        raise ValueError("initial data have infinite energy")
    e0 = E if energy0 is None else float(energy0)
    vol = grid.cell_volume

    rates = op.energy_rates(state, t)
    step_times, step_states, energies = [t], [state], [E]
    rate_log = {k: [v] for k, v in rates.items()}
    dts, mass_res, mom_res, energy_res, fluxes, sources = [], [], [], [], [], []
    states_out = [state]

    for target in times[1:]:
        while t < target:
            dt = cfg.dt if cfg.dt is not None else op.stable_dt(state)
            final = t + dt >= target - 1e-12 * max(1.0, abs(target))
            if final:
                dt = target - t
            for attempt in range(cfg.max_halvings + 1):
                try:
                    new, aux = op.heun(state, t, dt)
                    break
                except StepRejected as exc:
                    if attempt == cfg.max_halvings:
                        raise SolverError(f"step rejected after {cfg.max_halvings} halvings: {exc}") from exc
                    dt *= 0.5
                    final = False
            t_new = float(target) if final else t + dt
            E_new = total_energy(new, bd, cfg.eos, grid)
            rates_new = op.energy_rates(new, t_new)
            dm = (np.sum(new.rho) - np.sum(state.rho)) * vol
            mass_res.append(dm + dt * (np.sum(aux.mass_out) - aux.mass_source))
            dmom = np.sum((new.mom - state.mom).reshape(-1, grid.dim), axis=0) * vol
            mom_res.append(float(np.max(np.abs(dmom + dt * (aux.momentum_out - aux.momentum_source)))))
            q0 = rates["dissipation"] + rates["boundary"] - rates["source"]
            q1 = rates_new["dissipation"] + rates_new["boundary"] - rates_new["source"]
            energy_res.append(E_new - E + 0.5 * dt * (q0 + q1))
            fluxes.append(aux.mass_out)
            sources.append(dt * aux.mass_source)
            dts.append(dt)
            state, t, E, rates = new, t_new, E_new, rates_new
            step_times.append(t)
            step_states.append(state)
            energies.append(E)
            for k, v in rates.items():
                rate_log[k].append(v)
        states_out.append(state)

    energies = np.array(energies)
    trace = EnergyTrace(np.array(step_times), energies, energies, e0, jump_tol=0.0)
    log = {
        "time": np.array(step_times[1:]),
        "dt": np.array(dts),
        "mass": np.array(mass_res),
        "mass_source": np.array(sources),
        "momentum": np.array(mom_res),
        "energy": np.array(energy_res),
    }
    return Trajectory(
        grid,
        bd,
        cfg,
        times,
        states_out,
        trace,
        log,
        np.array(step_times),
        step_states,
        {k: np.array(v) for k, v in rate_log.items()},
        np.array(fluxes).reshape(len(fluxes), grid.n_boundary_faces),
        forcing,
    )
