"""Empirical measures on the data space and the pushforward Markov operator.

An :class:`Ensemble` is a finitely supported probability measure whose atoms
are data points ``(rho, m, boundary data, energy)``. The pushforward
``M_t`` moves every atom along its solver trajectory and keeps the weights.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .eos import EosParams
from .grid import BoundaryData, FieldState, Grid, SpectralBasis, project_scalar, project_vector, total_energy
from .monitors import mass_rates, momentum_rates, _mode_gradients
from .solver import Operator, SolverConfig, Trajectory, integrate

WEIGHT_TOL = 1e-12


class PreconditionError(ValueError):
    pass


class PushforwardError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"atom {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass
class DataPoint:
    """Initial data ``(rho, m)``, boundary data and the total energy ``E_0``.

    ``energy`` defaults to the energy functional of the state; a larger value
    encodes energy already lost to a jump at the initial time.
    """

    rho: np.ndarray
    mom: np.ndarray
    bd: BoundaryData
    energy: float | None = None
    grid: Grid | None = field(default=None, repr=False)
    eos: EosParams = field(default_factory=EosParams, repr=False)

    def __post_init__(self):
        self.grid = self.grid or self.bd.grid
        if self.grid is None:
            raise ValueError("data point needs a grid (pass one or use grid-aware boundary data)")
        if np.any(self.rho < 0):
            raise PreconditionError("initial density must be nonnegative")
        e = total_energy(self.state, self.bd, self.eos, self.grid)
        if not np.isfinite(e):
            raise PreconditionError("data point has infinite energy (vacuum carrying momentum)")
        if self.energy is None:
            self.energy = e

    @property
    def state(self) -> FieldState:
        return FieldState(self.rho, self.mom)


@dataclass
class Ensemble:
    atoms: list
    weights: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.atoms) == 0 or len(self.atoms) != len(self.weights):
            raise ValueError("ensemble needs one weight per atom and at least one atom")
        if np.any(self.weights < 0) or abs(np.sum(self.weights) - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        g = self.atoms[0].grid
        if any(a.grid != g for a in self.atoms):
            raise ValueError("all atoms must share one grid")

    @property
    def grid(self) -> Grid:
        return self.atoms[0].grid

    @classmethod
    def dirac(cls, atom: DataPoint, time: float = 0.0) -> "Ensemble":
        return cls([atom], np.ones(1), time)

    @classmethod
    def mixture(cls, ensembles: Sequence["Ensemble"], alphas) -> "Ensemble":
        """Convex combination ``sum alpha_i nu_i``."""
        alphas = np.asarray(alphas, dtype=float)
        atoms, weights = [], []
        for a, e in zip(alphas, ensembles):
            atoms.extend(e.atoms)
            weights.extend(a * e.weights)
        return cls(atoms, np.array(weights), ensembles[0].time)

    def copy(self) -> "Ensemble":
        atoms = [DataPoint(a.rho.copy(), a.mom.copy(), a.bd, a.energy, a.grid, a.eos) for a in self.atoms]
        return Ensemble(atoms, self.weights.copy(), self.time, dict(self.meta))


def _run_atom(args):
    atom, times, cfg, forcing = args
    return integrate(atom.state, atom.bd, cfg, times, grid=atom.grid, forcing=forcing, energy0=atom.energy)


def atom_trajectories(
    ens: Ensemble, times, cfg: SolverConfig, workers: int = 1, forcing=None
) -> list:
    """Solver trajectory of every atom through the absolute output ``times``.

    ``times[0]`` must be the ensemble time. Results are in atom order.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != ens.time:
        raise ValueError("trajectories must start at the ensemble time")
    jobs = [(a, times, cfg, forcing) for a in ens.atoms]
    out = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_atom, j) for j in jobs]
            for i, fut in enumerate(futures):
                try:
                    out.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported with the atom index
                    raise PushforwardError(i, exc) from exc
        return out
    for i, j in enumerate(jobs):
        try:
            out.append(_run_atom(j))
        except Exception as exc:  # noqa: BLE001
            raise PushforwardError(i, exc) from exc
    return out


def _advance(ens: Ensemble, trajs: list, k: int) -> Ensemble:
    atoms = []
    for a, tr in zip(ens.atoms, trajs):
        st = tr.states[k]
        e = float(tr.energy_trace.value(tr.times[k])) if k > 0 else a.energy
        atoms.append(DataPoint(st.rho, st.mom, a.bd, e, a.grid, a.eos))
    return Ensemble(atoms, ens.weights.copy(), float(trajs[0].times[k]), dict(ens.meta))


def pushforward(ens: Ensemble, t: float, cfg: SolverConfig, workers: int = 1, forcing=None) -> Ensemble:
    """``M_t`` applied to ``ens``: every atom moved to its solver state at ``ens.time + t``."""
    if t < 0:
        raise ValueError("pushforward time must be nonnegative")
    if t == 0:
        return ens.copy()
    trajs = atom_trajectories(ens, [ens.time, ens.time + t], cfg, workers, forcing)
    return _advance(ens, trajs, 1)


def pushforward_path(ens: Ensemble, times, cfg: SolverConfig, workers: int = 1, forcing=None) -> list:
    """Ensembles at each absolute time in ``times`` (starting at ``ens.time``)."""
    trajs = atom_trajectories(ens, times, cfg, workers, forcing)
    return [ens.copy()] + [_advance(ens, trajs, k) for k in range(1, len(times))]


def l2_distance(a: DataPoint, b: DataPoint) -> float:
    vol = a.grid.cell_volume
    return float(np.sqrt((np.sum((a.rho - b.rho) ** 2) + np.sum((a.mom - b.mom) ** 2)) * vol))


def semigroup_residual(ens: Ensemble, t: float, s: float, cfg: SolverConfig, workers: int = 1) -> float:
    """Max over atoms of the L2 distance between ``M_{t+s}`` and ``M_t M_s``."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    direct = pushforward(ens, t + s, cfg, workers)
    split = pushforward(pushforward(ens, s, cfg, workers), t, cfg, workers)
    return max(l2_distance(a, b) for a, b in zip(direct.atoms, split.atoms))


# observables -------------------------------------------------------------------
@dataclass
class Observable:
    """A function ``Phi(r, w, e)`` of projected density, momentum and energy.

    ``grad`` returns ``(dPhi/dr, dPhi/dw, dPhi/de)``; without it a central
    finite difference is used.
    """

    fn: Callable
    grad: Callable | None = None
    fd_step: float = 1e-6

    def __call__(self, r, w, e) -> float:
        return float(self.fn(np.asarray(r), np.asarray(w), float(e)))

    def gradient(self, r, w, e):
        if self.grad is not None:
            dr, dw, de = self.grad(np.asarray(r), np.asarray(w), float(e))
            return np.asarray(dr, float), np.asarray(dw, float), float(de)
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        x = np.concatenate([r, w, [e]])
        g = np.zeros_like(x)
        for i in range(len(x)):
            h = self.fd_step * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (self._flat(xp, len(r)) - self._flat(xm, len(r))) / (2 * h)
        return g[: len(r)], g[len(r) : -1], float(g[-1])

    def _flat(self, x, M):
        return self(x[:M], x[M:-1], x[-1])


def energy_observable() -> Observable:
    return Observable(lambda r, w, e: e, lambda r, w, e: (np.zeros_like(r), np.zeros_like(w), 1.0))


def atom_coordinates(atom: DataPoint, basis: SpectralBasis):
    return project_scalar(atom.rho, basis), project_vector(atom.mom, basis), float(atom.energy)


def expectation(ens: Ensemble, observable: Callable, basis: SpectralBasis) -> float:
    """``sum_k weight_k Phi(r_M, w_M, E)`` accumulated in atom order."""
    total = 0.0
    for wgt, atom in zip(ens.weights, ens.atoms):
        total += wgt * float(observable(*atom_coordinates(atom, basis)))
    return float(total)


# statistical energy inequality ----------------------------------------------------
@dataclass(frozen=True)
class TestFunction:
    """Nonnegative time weight ``psi`` with compact support in ``[0, support_end]``."""

    psi: Callable
    support_end: float
    name: str = "custom"

    __test__ = False  # not a pytest class

    def __call__(self, t):
        return self.psi(np.asarray(t, dtype=float))


def quadratic_decay(T: float) -> TestFunction:
    """``psi(t) = (1 - t/T)^2`` on ``[0, T]`` and zero afterwards; C^1."""
    return TestFunction(lambda t: np.where(t < T, (1.0 - np.clip(t, 0, T) / T) ** 2, 0.0), T, "quadratic_decay")


def hat(center: float, width: float) -> TestFunction:
    return TestFunction(lambda t: np.clip(1.0 - np.abs(t - center) / width, 0.0, None), center + width, "hat")


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


def _step_means(psi: TestFunction, times: np.ndarray) -> np.ndarray:
    a, b = times[:-1], times[1:]
    nodes = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GAUSS_X[None, :]
    return 0.5 * (psi(nodes) @ _GAUSS_W)


def _sm4_terms(times, phis, phi_init, dphis, rates, psi: TestFunction) -> dict:
    """LHS and the three rate integrals on one time grid."""
    means = _step_means(psi, times)
    lhs = float(psi(times[0])) * (phis[0] - phi_init) + float(np.sum(np.diff(phis) * means))
    weights = psi(times)
    dt = np.diff(times)
    out = {"lhs": lhs}
    for key in ("mass", "momentum", "energy"):
        f = weights * np.sum(dphis[key] * rates[key], axis=-1) if dphis[key].ndim > 1 else weights * dphis[key] * rates[key]
        out[key] = float(np.sum(0.5 * dt * (f[:-1] + f[1:])))
    return out


def trajectory_statistic(
    traj: Trajectory, observable: Observable, psi: TestFunction, basis: SpectralBasis, energy0: float | None = None
) -> dict:
    """Per-trajectory form of the statistical energy inequality.

    Returns ``residual = LHS - RHS`` where
    ``LHS = -int psi' Phi dt - psi(t0) Phi(r0, w0, E_0)`` (computed by parts on
    the piecewise-linear path of ``Phi``) and ``RHS`` integrates ``psi`` times
    the chain-rule rates: mass and momentum projections and the energy bound
    ``-(dissipation + boundary P-flux) + source``. ``tolerance`` is the sum
    of per-term differences between the full step grid and every-other step.
    """
    times = traj.step_times
    if abs(float(psi(times[-1]))) > 1e-14:
        raise PreconditionError("test function must vanish at the end of the trajectory")
    if np.any(psi(times) < 0):
        raise PreconditionError("test function must be nonnegative")
    op = Operator(traj.grid, traj.bd, traj.cfg, traj.forcing)
    grads = _mode_gradients(basis)
    energies = traj.energy_trace.right_values
    e0 = traj.energy0 if energy0 is None else energy0
    r = np.array([project_scalar(s.rho, basis) for s in traj.step_states])
    w = np.array([project_vector(s.mom, basis) for s in traj.step_states])
    phis = np.array([observable(r[k], w[k], energies[k]) for k in range(len(times))])
    phi_init = observable(r[0], w[0], e0)
    gr, gw, ge = [], [], []
    for k in range(len(times)):
        a, b, c = observable.gradient(r[k], w[k], energies[k])
        gr.append(a)
        gw.append(b)
        ge.append(c)
    ge = np.array(ge)
    if np.any(ge < -1e-12):
        raise PreconditionError("observable must be nondecreasing in the energy argument")
    rates = {
        "mass": np.array([mass_rates(s, t, op, basis) for s, t in zip(traj.step_states, times)]),
        "momentum": np.array([momentum_rates(s, t, op, basis, grads) for s, t in zip(traj.step_states, times)]),
        "energy": -(traj.step_rates["dissipation"] + traj.step_rates["boundary"]) + traj.step_rates["source"],
    }
    dphis = {"mass": np.array(gr), "momentum": np.array(gw), "energy": ge}
    full = _sm4_terms(times, phis, phi_init, dphis, rates, psi)
    sub = np.arange(0, len(times), 2)
    if sub[-1] != len(times) - 1:
        sub = np.append(sub, len(times) - 1)
    coarse = _sm4_terms(
        times[sub], phis[sub], phi_init, {k: v[sub] for k, v in dphis.items()}, {k: v[sub] for k, v in rates.items()}, psi
    )
    scale = sum(abs(v) for v in full.values())
    tol = sum(abs(full[k] - coarse[k]) for k in full) + 1e-13 * scale
    rhs = full["mass"] + full["momentum"] + full["energy"]
    return {**full, "rhs": rhs, "residual": full["lhs"] - rhs, "tolerance": tol}


def statistical_energy_inequality_report(
    ens0: Ensemble,
    observable: Observable,
    test_fn: TestFunction,
    cfg: SolverConfig,
    basis: SpectralBasis,
    workers: int = 1,
    trajectories: list | None = None,
) -> dict:
    """Weighted statistical energy inequality over an ensemble.

    ``tol_stat`` is ten times the weighted sum of per-trajectory quadrature
    tolerances; the inequality is verified when ``residual <= tol_stat``.
    """
    if trajectories is None:
        end = test_fn.support_end
        times = [ens0.time, end]
        trajectories = atom_trajectories(ens0, times, cfg, workers)
    per_atom = [
        trajectory_statistic(tr, observable, test_fn, basis, atom.energy)
        for tr, atom in zip(trajectories, ens0.atoms)
    ]
    residual = 0.0
    tol = 0.0
    for wgt, rep in zip(ens0.weights, per_atom):
        residual += wgt * rep["residual"]
        tol += wgt * rep["tolerance"]
    tol_stat = 10.0 * tol
    return {
        "residual": float(residual),
        "tol_stat": float(tol_stat),
        "holds": bool(residual <= tol_stat),
        "per_atom": per_atom,
    }


def statistical_energy_inequality_residual(
    ens0: Ensemble, observable: Observable, test_fn: TestFunction, cfg: SolverConfig, basis: SpectralBasis, workers: int = 1
) -> float:
    return statistical_energy_inequality_report(ens0, observable, test_fn, cfg, basis, workers)["residual"]


# samplers -----------------------------------------------------------------------------
def fourier_ensemble(
    grid: Grid,
    bd: BoundaryData,
    n_atoms: int,
    seed: int,
    base_density: float = 1.0,
    density_amplitude: float = 0.1,
    momentum_amplitude: float = 0.1,
    modes: int = 3,
    weights=None,
    eos: EosParams | None = None,
) -> Ensemble:
    """Smooth random Fourier perturbations of a uniform state moving with the boundary lifting.

    Density gets ``sum_k a_k cos(k pi x / L)``-type perturbations scaled to
    keep ``rho >= base (1 - density_amplitude)``; momentum gets sine modes
    that vanish on the boundary. Coefficients decay like ``1/k``.
    """
    rng = np.random.default_rng(seed)
    x = grid.cell_centers()
    atoms = []
    for _ in range(n_atoms):
        pert = np.zeros(grid.cells)
        mom = np.zeros(grid.cells + (grid.dim,))
        for k in range(1, modes + 1):
            for a in range(grid.dim):
                phase = rng.uniform(0, 2 * np.pi)
                arg = k * np.pi * x[..., a] / grid.extents[a]
                pert += rng.normal() / k * np.cos(arg + phase)
                shape = np.ones(grid.cells)
                for b in range(grid.dim):
                    shape = shape * np.sin(np.pi * x[..., b] / grid.extents[b])
                for c in range(grid.dim):
                    mom[..., c] += momentum_amplitude * rng.normal() / k * np.sin(arg) * shape
        scale = np.max(np.abs(pert))
        rho = base_density * (1.0 + density_amplitude * pert / (scale if scale > 0 else 1.0))
        atoms.append(DataPoint(rho, rho[..., None] * (bd.u_cells + mom), bd, grid=grid, eos=eos or EosParams()))
    w = np.full(n_atoms, 1.0 / n_atoms) if weights is None else np.asarray(weights, float)
    meta = {"sampler": "fourier", "seed": int(seed), "modes": modes}
    return Ensemble(atoms, w, 0.0, meta)
