"""Bregman-Wasserstein distance between ensembles.

The cost between a "weak" atom ``(rho, m)`` and a "strong" atom
``(rho~, m~)`` is the integrated relative energy, which is not symmetric.
Exact distances solve the transportation linear program with HiGHS;
entropic distances use log-domain Sinkhorn scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .eos import DomainError, EosParams, relative_energy_field
from .measures import DataPoint, Ensemble, pushforward_path
from .solver import SolverConfig

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class CostMatrix:
    """Costs with an explicit mask; ``finite[i, j]`` false encodes an infinite cost."""

    entries: np.ndarray
    finite: np.ndarray

    @classmethod
    def from_array(cls, entries) -> "CostMatrix":
        entries = np.asarray(entries, dtype=float)
        finite = np.isfinite(entries)
        return cls(np.where(finite, entries, 0.0), finite)

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray

    def marginal_error(self, w1, w2) -> float:
        return float(
            max(np.max(np.abs(self.coupling.sum(axis=1) - w1)), np.max(np.abs(self.coupling.sum(axis=0) - w2)))
        )


@dataclass(frozen=True)
class EntropicResult:
    value: float
    plan: TransportPlan
    converged: bool
    iterations: int
    entropy_bound: float
    marginal_error: float


def relative_energy_cost(a: DataPoint, b: DataPoint, eos: EosParams):
    """``int E(rho_a, m_a | rho_b, m_b) dx``; returns ``(value, finite)``."""
    values, finite = relative_energy_field(a.rho, a.mom, b.rho, b.mom, eos)
    if not np.all(finite):
        return 0.0, False
    return float(np.sum(values) * a.grid.cell_volume), True


def _check_compatible(ens1: Ensemble, ens2: Ensemble) -> None:
    if ens1.grid != ens2.grid:
        raise ValueError("ensembles live on different grids")
    ref = ens1.atoms[0].bd
    for e in (ens1, ens2):
        for a in e.atoms:
            if not a.bd.same_as(ref):
                raise ValueError("boundary data differ between compared atoms; the distance is only defined for equal boundary data")


def build_cost_matrix(ens1: Ensemble, ens2: Ensemble, eos: EosParams) -> CostMatrix:
    _check_compatible(ens1, ens2)
    for j, b in enumerate(ens2.atoms):
        if np.any(b.rho <= 0):
            raise DomainError(f"atom {j} of the second ensemble has nonpositive density")
    n1, n2 = len(ens1.atoms), len(ens2.atoms)
    entries = np.zeros((n1, n2))
    finite = np.ones((n1, n2), dtype=bool)
    for i, a in enumerate(ens1.atoms):
        for j, b in enumerate(ens2.atoms):
            entries[i, j], finite[i, j] = relative_energy_cost(a, b, eos)
    return CostMatrix(entries, finite)


def _check_weights(w1, w2):
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    for w in (w1, w2):
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("marginal weights must be nonnegative and sum to 1")
    return w1, w2


def transport_exact(w1, w2, cost: CostMatrix):
    """Solve ``min <C, P>`` over couplings of ``w1`` and ``w2``.

    Infinite entries are excluded by zero upper bounds. Returns
    ``(value, plan)``; the value is ``inf`` (and the plan ``None``) when no
    coupling avoids the infinite entries.
    """
    w1, w2 = _check_weights(w1, w2)
    n1, n2 = cost.shape
    if n1 * n2 > 10_000:
        raise ValueError("exact transport is limited to n1 * n2 <= 1e4")
    A_rows = np.kron(np.eye(n1), np.ones((1, n2)))
    A_cols = np.kron(np.ones((1, n1)), np.eye(n2))
    A = np.vstack([A_rows, A_cols])
    b = np.concatenate([w1, w2])
    bounds = [(0.0, None if f else 0.0) for f in cost.finite.ravel()]
    res = linprog(cost.entries.ravel(), A_eq=A, b_eq=b, bounds=bounds, method="highs")
    if res.status == 2:
        return float("inf"), None
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    P = np.clip(res.x.reshape(n1, n2), 0.0, None)
    return float(np.sum(P * cost.entries)), TransportPlan(P)


def we_distance_exact(ens1: Ensemble, ens2: Ensemble, cost: CostMatrix):
    return transport_exact(ens1.weights, ens2.weights, cost)


def _scaling_pass(logw1, logw2, C, F, G, eps, max_iter, tol, w1):
    """Alternate dual updates at fixed ``eps``; duals ``F, G`` are in cost units."""
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        F = eps * (logw1 - logsumexp((G[None, :] - C) / eps, axis=1))
        G = eps * (logw2 - logsumexp((F[:, None] - C) / eps, axis=0))
        if it % 10 == 0 or it == max_iter:
            P = np.exp((F[:, None] + G[None, :] - C) / eps)
            err = float(np.max(np.abs(P.sum(axis=1) - w1)))
            if err <= tol:
                break
    return F, G, it, err


def sinkhorn(w1, w2, cost: CostMatrix, epsilon: float, max_iter: int = 10_000, tol: float = MARGINAL_TOL) -> EntropicResult:
    """Entropic transport by alternating marginal scaling in the log domain.

    Small ``epsilon`` is reached by halving from the cost scale with warm
    started dual potentials, which keeps the iteration count moderate. The
    reported value is the transport cost ``<C, P>`` of the regularised plan.
    ``entropy_bound = epsilon * log(n1 n2)`` bounds how far the regularised
    objective can sit below the exact optimum.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w1, w2 = _check_weights(w1, w2)
    C = np.where(cost.finite, cost.entries, np.inf)
    logw1 = np.where(w1 > 0, np.log(np.where(w1 > 0, w1, 1.0)), -np.inf)
    logw2 = np.where(w2 > 0, np.log(np.where(w2 > 0, w2, 1.0)), -np.inf)
    finite_vals = cost.entries[cost.finite]
    scale = float(np.max(finite_vals)) if finite_vals.size else 0.0
    schedule = [epsilon]
    while schedule[-1] * 2.0 < scale:
        schedule.append(schedule[-1] * 2.0)
    F = np.zeros_like(w1)
    G = np.zeros_like(w2)
    total = 0
    err = np.inf
    with np.errstate(invalid="ignore", divide="ignore"):
        for eps in reversed(schedule):
            final = eps == epsilon
            budget = max_iter - total if final else min(max_iter - total, 200)
            F, G, it, err = _scaling_pass(logw1, logw2, C, F, G, eps, max(budget, 1), tol, w1)
            total += it
        P = np.nan_to_num(np.exp((F[:, None] + G[None, :] - C) / epsilon))
    err = TransportPlan(P).marginal_error(w1, w2)
    n1, n2 = C.shape
    value = float(np.sum(P * cost.entries))
    return EntropicResult(value, TransportPlan(P), err <= tol, total, epsilon * np.log(n1 * n2), err)


def we_distance_entropic(ens1: Ensemble, ens2: Ensemble, cost: CostMatrix, epsilon: float, max_iter: int = 10_000):
    res = sinkhorn(ens1.weights, ens2.weights, cost, epsilon, max_iter)
    return res.value, res.plan, res


def we_distance(ens1: Ensemble, ens2: Ensemble, eos: EosParams) -> float:
    cost = build_cost_matrix(ens1, ens2, eos)
    return we_distance_exact(ens1, ens2, cost)[0]


def asymmetry_report(ens1: Ensemble, ens2: Ensemble, eos: EosParams):
    """Both directed distances ``(W(nu1, nu2), W(nu2, nu1))``."""
    return we_distance(ens1, ens2, eos), we_distance(ens2, ens1, eos)


# continuity at regular data --------------------------------------------------------------
def smooth_bump(grid, mode: int = 1) -> np.ndarray:
    """Low-mode bump ``prod_a sin(mode pi x_a / L_a)``, vanishing on the boundary."""
    x = grid.cell_centers()
    out = np.ones(grid.cells)
    for a in range(grid.dim):
        out = out * np.sin(mode * np.pi * x[..., a] / grid.extents[a])
    return out


def perturb(ens: Ensemble, delta: float, amplitude: float = 0.1) -> Ensemble:
    """Each atom's density scaled by ``1 + delta * amplitude * bump``, momentum shifted by the same bump."""
    bump = smooth_bump(ens.grid)
    atoms = []
    for a in ens.atoms:
        rho = a.rho * (1.0 + delta * amplitude * bump)
        mom = a.mom + delta * amplitude * bump[..., None] * np.mean(a.rho)
        atoms.append(DataPoint(rho, mom, a.bd, grid=a.grid, eos=a.eos))
    return Ensemble(atoms, ens.weights.copy(), ens.time, dict(ens.meta))


def density_transport_cost(ens1: Ensemble, ens2: Ensemble, plan: TransportPlan) -> float:
    """``sum_ij P_ij ||rho_i - rho~_j||^2`` for a given plan (squared-L2 ground cost)."""
    vol = ens1.grid.cell_volume
    D = np.array([[np.sum((a.rho - b.rho) ** 2) * vol for b in ens2.atoms] for a in ens1.atoms])
    return float(np.sum(plan.coupling * D))


def continuity_experiment(
    nu: Ensemble,
    deltas,
    T: float,
    L: float,
    cfg: SolverConfig,
    n_times: int = 9,
    amplitude: float = 0.1,
    workers: int = 1,
) -> dict:
    """Measure ``sup_t W_E(M_t nu_n, M_t nu)`` for perturbations of size ``delta_n``.

    The band ``1/L <= rho <= L`` is checked on every output state of the
    reference runs; a violation marks the experiment invalid. Rows report
    ``delta``, ``W_E(nu_n, nu)``, the sup over output times, their ratio and
    the density transport cost of the optimal plans.
    """
    times = np.linspace(nu.time, nu.time + T, n_times)
    ref = pushforward_path(nu, times, cfg, workers)
    eos = nu.atoms[0].eos
    lo = min(float(np.min(a.rho)) for e in ref for a in e.atoms)
    hi = max(float(np.max(a.rho)) for e in ref for a in e.atoms)
    valid = lo >= 1.0 / L and hi <= L
    rows = []
    realized_lo, realized_hi = lo, hi
    for delta in deltas:
        if delta == 0:
            rows.append({"delta": 0.0, "initial": 0.0, "sup": 0.0, "ratio": float("nan"), "density_w": 0.0})
            continue
        nu_n = perturb(nu, delta, amplitude)
        path = pushforward_path(nu_n, times, cfg, workers)
        realized_lo = min(realized_lo, min(float(np.min(a.rho)) for e in path for a in e.atoms))
        realized_hi = max(realized_hi, max(float(np.max(a.rho)) for e in path for a in e.atoms))
        dists, dens = [], []
        for e_n, e in zip(path, ref):
            cost = build_cost_matrix(e_n, e, eos)
            value, plan = we_distance_exact(e_n, e, cost)
            dists.append(value)
            dens.append(density_transport_cost(e_n, e, plan))
        rows.append(
            {
                "delta": float(delta),
                "initial": dists[0],
                "sup": max(dists),
                "ratio": max(dists) / dists[0] if dists[0] > 0 else float("nan"),
                "density_w": max(dens),
            }
        )
    ratios = np.array([r["ratio"] for r in rows if r["delta"] > 0])
    return {
        "valid": bool(valid),
        "band": [1.0 / L, L],
        "reference_range": [lo, hi],
        "realized_range": [realized_lo, realized_hi],
        "rows": rows,
        "constant": float(np.max(ratios)) if len(ratios) else 0.0,
        "times": times.tolist(),
    }
