"""Energy order on trajectories and selection of maximally dissipative candidates.

Trajectory ``a`` precedes ``b`` when its state energy is no larger at every
output time. Candidates are ranked by the discounted functional
``F = int_0^inf exp(-lam t) beta(E_cg(t)) dt``, which is strictly monotone
in the trace, so its minimiser cannot be strictly dominated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import PreconditionError
from .monitors import energy_inequality_holds, potential_energy
from .solver import Trajectory

LE, GT, INCOMPARABLE = "less-or-equal", "greater", "incomparable"


@dataclass(frozen=True)
class SelectionFunctional:
    lam: float = 1.0
    beta: Callable = np.arctan
    beta_sup: float = np.pi / 2

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"decay rate must be positive, got {self.lam}")


@dataclass
class CandidateFamily:
    candidates: list
    provenance: list = field(default_factory=list)
    check_monitors: bool = True

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate family is empty")
        if not self.provenance:
            self.provenance = [f"c{i:03d}" for i in range(len(self.candidates))]
        if len(self.provenance) != len(self.candidates) or len(set(self.provenance)) != len(self.provenance):
            raise ValueError("need one distinct provenance id per candidate")
        first = self.candidates[0]
        for c in self.candidates[1:]:
            s0, t0 = first.states[0], c.states[0]
            if not (np.array_equal(s0.rho, t0.rho) and np.array_equal(s0.mom, t0.mom)):
                raise ValueError("candidates must share initial data")
            if not first.bd.same_as(c.bd):
                raise ValueError("candidates must share boundary data")
        if self.check_monitors:
            for pid, c in zip(self.provenance, self.candidates):
                if "energy" in c.residual_log and not energy_inequality_holds(c):
                    raise ValueError(f"candidate {pid} violates the energy inequality")


def _energy_tol(a: Trajectory, b: Trajectory) -> float:
    return a.cfg.energy_tol * max(abs(a.energy0), abs(b.energy0), 1e-300)


def energy_order(a: Trajectory, b: Trajectory, tol: float | None = None) -> str:
    """Compare state energies on the shared output times."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories must share their output times")
    tol = _energy_tol(a, b) if tol is None else tol
    ea, eb = a.state_energies(), b.state_energies()
    if np.all(ea <= eb + tol):
        return LE
    if np.all(eb <= ea + tol):
        return GT
    return INCOMPARABLE


def strictly_dominates(b: Trajectory, a: Trajectory, tol: float | None = None) -> bool:
    """``b`` has energy no larger than ``a`` everywhere and strictly smaller somewhere."""
    tol = _energy_tol(a, b) if tol is None else tol
    ea, eb = a.state_energies(), b.state_energies()
    return bool(np.all(eb <= ea + tol) and np.any(eb < ea - tol))


@dataclass(frozen=True)
class KrylovValue:
    value: float
    horizon: float
    tail_bound: float


def krylov_value(traj: Trajectory, f: SelectionFunctional, horizon: float | None = None) -> KrylovValue:
    """``int_0^H exp(-lam t) beta(E_cg(t)) dt`` with exact exponential weights.

    On each step interval ``(t_k, t_{k+1}]`` the trace is replaced by its
    value at ``t_{k+1}``; beyond the data the last value is held. The
    neglected part beyond ``H`` is at most ``exp(-lam H) sup|beta| / lam``.
    """
    tr = traj.energy_trace
    b = tr.breakpoints - tr.breakpoints[0]
    span = float(b[-1])
    H = max(5.0 / f.lam, span) if horizon is None else float(horizon)
    if H < span:
        raise ValueError("horizon must cover the trajectory span")
    lam = f.lam
    decay = np.exp(-lam * b)
    vals = np.asarray(f.beta(tr.left_values[1:]), dtype=float)
    total = float(np.sum(vals * (decay[:-1] - decay[1:])) / lam) if len(b) > 1 else 0.0
    last = float(f.beta(tr.right_values[-1]))
    total += last * (np.exp(-lam * span) - np.exp(-lam * H)) / lam
    return KrylovValue(total, H, float(np.exp(-lam * H) * f.beta_sup / lam))


@dataclass
class SelectionResult:
    selected: Trajectory
    index: int
    selected_id: str
    values: list
    order: list
    audit_passed: bool

    def to_dict(self) -> dict:
        return {
            "selected_id": self.selected_id,
            "values": self.values,
            "order": self.order,
            "audit_passed": self.audit_passed,
        }


def order_matrix(family: CandidateFamily) -> list:
    n = len(family.candidates)
    return [[energy_order(family.candidates[i], family.candidates[j]) for j in range(n)] for i in range(n)]


def select_maximal(family: CandidateFamily, f: SelectionFunctional, horizon: float | None = None) -> SelectionResult:
    """Minimise the functional over the family; ties go to the smallest provenance id.

    The result carries an exhaustive audit: no family member strictly
    dominates the selected candidate in energy.
    """
    values = [krylov_value(c, f, horizon).value for c in family.candidates]
    best = min(range(len(values)), key=lambda i: (values[i], family.provenance[i]))
    sel = family.candidates[best]
    audit = not any(strictly_dominates(c, sel) for i, c in enumerate(family.candidates) if i != best)
    return SelectionResult(sel, best, family.provenance[best], values, order_matrix(family), audit)


@dataclass(frozen=True)
class LyapunovReport:
    e_infty: float
    converged: bool
    tail_spread: float
    state_gap: float


def lyapunov_limit_check(
    traj: Trajectory, tail_fraction: float = 0.2, rel_tol: float = 1e-3, potential: np.ndarray | None = None
) -> LyapunovReport:
    """Estimate ``E_inf`` from the tail of the trace and compare the state energy with it.

    Requires ``u_B = 0`` and either ``g = 0`` or a potential ``G`` with
    ``g = grad G``, in which case ``E - int rho G`` is used. Converged means
    the trace is flat over the tail and the final state energy sits at the
    same limit, both to ``rel_tol``.
    """
    bd = traj.bd
    if not bd.is_homogeneous():
        raise PreconditionError("energy is a Lyapunov function only for u_B = 0")
    if np.any(bd.g) and potential is None:
        raise PreconditionError("nonzero body force needs its potential G with g = grad G")
    tr = traj.energy_trace
    t = tr.breakpoints
    vals = tr.left_values.copy()
    vals[0] = tr.right_values[0]
    state_end = float(traj.state_energies()[-1])
    if potential is not None:
        shift = np.array([potential_energy(s, potential, traj.grid) for s in traj.step_states])
        vals = vals - shift
        state_end -= shift[-1]
    start = t[-1] - tail_fraction * (t[-1] - t[0])
    tail = vals[t >= start]
    e_inf = float(np.mean(tail))
    scale = max(abs(e_inf), 1e-300)
    spread = float((np.max(tail) - np.min(tail)) / scale)
    gap = float(abs(state_end - e_inf) / scale)
    return LyapunovReport(e_inf, spread <= rel_tol and gap <= rel_tol, spread, gap)
