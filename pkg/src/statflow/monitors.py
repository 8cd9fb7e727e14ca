"""Balance monitors evaluated along a trajectory.

All monitors aggregate per-step quantities over the output intervals
``[times[k], times[k+1]]`` of the trajectory.
"""

from __future__ import annotations

import numpy as np

from .eos import pressure, sound_speed
from .grid import BoundaryData, FieldState, SpectralBasis, ghost_extend, project_scalar, project_vector
from .solver import Operator, SolverConfig, Trajectory, _index, _rusanov, cell_gradient, viscous_stress


def _interval_sums(traj: Trajectory, per_step: np.ndarray) -> np.ndarray:
    idx = traj.output_step_indices()
    csum = np.concatenate([[0.0], np.cumsum(per_step, axis=0)]) if per_step.ndim == 1 else np.concatenate(
        [np.zeros((1,) + per_step.shape[1:]), np.cumsum(per_step, axis=0)]
    )
    return csum[idx[1:]] - csum[idx[:-1]]


def energy_step_tolerance(traj: Trajectory) -> float:
    return traj.cfg.energy_tol * max(abs(traj.energy0), 1e-300)


def energy_inequality_residual(traj: Trajectory, bd: BoundaryData | None = None, cfg: SolverConfig | None = None) -> np.ndarray:
    """Per-interval residual of the discrete energy inequality.

    ``R_k = dE + int (dissipation + boundary P-flux - source) dt`` with the
    time integral taken by the trapezoid rule over solver steps; the
    inequality holds when ``R_k <= tol``. When ``bd`` or ``cfg`` is given the
    rates are recomputed from the stored step states instead of the log.
    """
    if bd is None and cfg is None:
        return _interval_sums(traj, traj.residual_log["energy"])
    op = Operator(traj.grid, bd or traj.bd, cfg or traj.cfg, traj.forcing)
    q = np.array(
        [
            (lambda r: r["dissipation"] + r["boundary"] - r["source"])(op.energy_rates(s, t))
            for s, t in zip(traj.step_states, traj.step_times)
        ]
    )
    E = traj.energy_trace.right_values
    per_step = np.diff(E) + 0.5 * np.diff(traj.step_times) * (q[:-1] + q[1:])
    return _interval_sums(traj, per_step)


def energy_inequality_holds(traj: Trajectory) -> bool:
    """Every per-step energy residual is within ``tol_E``."""
    return bool(np.all(traj.residual_log["energy"] <= energy_step_tolerance(traj)))


def mass_balance_residual(traj: Trajectory, bd: BoundaryData | None = None) -> np.ndarray:
    """Per-interval ``mass change + net outflow - sources`` from recorded fluxes."""
    vol = traj.grid.cell_volume
    masses = np.array([np.sum(s.rho) * vol for s in traj.states])
    dt = traj.residual_log["dt"]
    outflow = _interval_sums(traj, np.sum(traj.boundary_mass_flux, axis=1) * dt)
    source = _interval_sums(traj, traj.residual_log["mass_source"])
    return np.diff(masses) + outflow - source


def inflow_mass(traj: Trajectory) -> np.ndarray:
    """Per-interval mass entering through inflow faces, from recorded fluxes."""
    dt = traj.residual_log["dt"]
    influx = np.sum(np.clip(-traj.boundary_mass_flux, 0, None), axis=1) * dt
    return _interval_sums(traj, influx)


# projected balances ---------------------------------------------------------
def mass_rates(state: FieldState, t: float, op: Operator, basis: SpectralBasis) -> np.ndarray:
    """``int m . grad r_i`` discretised consistently with the scheme's fluxes.

    Summation by parts of the cell update: interior face fluxes times the
    jump of ``r_i`` across the face, minus boundary-face outflow times the
    adjacent cell value of ``r_i``; plus ``int s r_i`` for a mass source.
    """
    g = op.grid
    rho, mom = state.rho, state.mom
    u = op.velocity(rho, mom)
    p = pressure(rho, op.cfg.eos)
    c = sound_speed(rho, op.cfg.eos)
    fr_out, _ = op._boundary_flux(rho, mom, u, p, c, t)
    modes = basis.scalar_modes
    rates = np.zeros(basis.size)
    for axis in range(g.dim):
        lo = _index(g.dim, axis, slice(None, -1))
        hi = _index(g.dim, axis, slice(1, None))
        fr, _ = _rusanov(
            (rho[lo], mom[lo], u[lo], p[lo], c[lo]),
            (rho[hi], mom[hi], u[hi], p[hi], c[hi]),
            axis,
            op.cfg.artificial_dissipation,
        )
        area = g.cell_volume / g.spacing[axis]
        jump = np.diff(modes, axis=axis + 1)
        rates += np.sum((jump * fr).reshape(basis.size, -1), axis=1) * area
    for name, _, _, count in g.sides():
        idx = (slice(None),) + g.boundary_cell_index(name)
        r_adj = modes[idx].reshape(basis.size, count)
        sl = op.slices[name]
        rates -= r_adj @ (fr_out[sl] * op.areas[sl])
    s = op._forcing("mass_source", t)
    if s is not None:
        rates += project_scalar(s, basis)
    return rates


def _mode_gradients(basis: SpectralBasis) -> np.ndarray:
    """Central gradients of the vector modes with odd ghosts, ``(M,) + cells + (d, d)``."""
    g = basis.grid
    zero = np.zeros((g.n_boundary_faces, g.dim))
    return np.array([cell_gradient(w, g, zero) for w in basis.vector_modes])


def momentum_rates(state: FieldState, t: float, op: Operator, basis: SpectralBasis, grads=None) -> np.ndarray:
    """Cell-centred quadrature of
    ``int [rho u x u : grad w + p div w - S : grad w + rho g . w + f . w]``."""
    g = op.grid
    eos = op.cfg.eos
    rho, mom = state.rho, state.mom
    u = op.velocity(rho, mom)
    Gw = _mode_gradients(basis) if grads is None else grads
    Gu = cell_gradient(u, g, op.bd.u_b)
    S = viscous_stress(Gu, op.cfg.mu, op.cfg.lam, g.dim)
    flux = rho[..., None, None] * u[..., :, None] * u[..., None, :] - S
    flux = flux + pressure(rho, eos)[..., None, None] * np.eye(g.dim)
    body = rho[..., None] * op.bd.g
    f = op._forcing("momentum_source", t)
    if f is not None:
        body = body + f
    vol = g.cell_volume
    cell_axes = tuple(range(1, g.dim + 1))
    conv = np.sum(Gw * flux, axis=(-1, -2))
    return np.sum(conv, axis=cell_axes) * vol + project_vector(body, basis)


def momentum_rate_reference(state: FieldState, t: float, op: Operator, mode: np.ndarray) -> float:
    """Cell-by-cell loop evaluation of the projected momentum rate for one mode."""
    g = op.grid
    eos = op.cfg.eos
    d = g.dim
    u = op.velocity(state.rho, state.mom)
    ue = ghost_extend(u, g, op.bd.u_b)
    we = ghost_extend(mode, g, np.zeros((g.n_boundary_faces, d)))
    f = op._forcing("momentum_source", t)
    total = 0.0
    for cell in np.ndindex(*g.cells):
        e = tuple(i + 1 for i in cell)
        Gu = np.zeros((d, d))
        Gw = np.zeros((d, d))
        for j in range(d):
            up = list(e)
            dn = list(e)
            up[j] += 1
            dn[j] -= 1
            Gu[:, j] = (ue[tuple(up)] - ue[tuple(dn)]) / (2 * g.spacing[j])
            Gw[:, j] = (we[tuple(up)] - we[tuple(dn)]) / (2 * g.spacing[j])
        r = state.rho[cell]
        uc = u[cell]
        div_u = np.trace(Gu)
        S = op.cfg.mu * (Gu + Gu.T - 2.0 / d * div_u * np.eye(d)) + op.cfg.lam * div_u * np.eye(d)
        p = eos.a * r**eos.gamma
        integrand = (
            r * uc @ Gw @ uc
            + p * np.trace(Gw)
            - np.sum(S * Gw)
            + r * op.bd.g[cell] @ mode[cell]
        )
        if f is not None:
            integrand += f[cell] @ mode[cell]
        total += integrand * g.cell_volume
    return float(total)


def _projected_residual(traj: Trajectory, coeffs: np.ndarray, rates: np.ndarray) -> np.ndarray:
    dt = np.diff(traj.step_times)[:, None]
    per_step = np.diff(coeffs, axis=0) - 0.5 * dt * (rates[:-1] + rates[1:])
    return _interval_sums(traj, per_step)


def mass_projection_residual(traj: Trajectory, basis: SpectralBasis) -> np.ndarray:
    """Per-interval, per-mode residual of ``d/dt int rho r_i = int m . grad r_i``."""
    op = Operator(traj.grid, traj.bd, traj.cfg, traj.forcing)
    coeffs = np.array([project_scalar(s.rho, basis) for s in traj.step_states])
    rates = np.array([mass_rates(s, t, op, basis) for s, t in zip(traj.step_states, traj.step_times)])
    return _projected_residual(traj, coeffs, rates)


def momentum_projection_residual(traj: Trajectory, bd: BoundaryData | None, basis: SpectralBasis) -> np.ndarray:
    """Per-interval, per-mode residual of the projected momentum balance."""
    op = Operator(traj.grid, bd or traj.bd, traj.cfg, traj.forcing)
    grads = _mode_gradients(basis)
    coeffs = np.array([project_vector(s.mom, basis) for s in traj.step_states])
    rates = np.array(
        [momentum_rates(s, t, op, basis, grads) for s, t in zip(traj.step_states, traj.step_times)]
    )
    return _projected_residual(traj, coeffs, rates)


def potential_energy(state: FieldState, potential: np.ndarray, grid) -> float:
    """``int rho G`` for a cell-sampled potential ``G``."""
    return float(np.sum(state.rho * potential) * grid.cell_volume)


def lyapunov_energies(traj: Trajectory, potential: np.ndarray) -> np.ndarray:
    """``E - int rho G`` at every step, for body force ``g = grad G`` and ``u_B = 0``.

    Along solutions ``d/dt int rho G = int rho u . grad G``, which is exactly
    the power of the body force, so this quantity cannot increase.
    """
    E = traj.energy_trace.left_values
    return np.array([e - potential_energy(s, potential, traj.grid) for e, s in zip(E, traj.step_states)])
