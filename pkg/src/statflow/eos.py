"""Isentropic equation of state, pressure potential and energy densities.

The pressure law is ``p(rho) = a * rho**gamma``. Its potential ``P`` solves
``P'(rho) rho - P(rho) = p(rho)`` with ``P(0) = 0``, giving
``P(rho) = a rho**gamma / (gamma - 1)``.

Energy densities are extended-valued convex functions of ``(rho, m)``; the
value infinity is carried by an explicit flag instead of ``inf`` so that
callers can reject it before it reaches an integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: densities below this are treated as vacuum
VACUUM_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class EosParams:
    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"pressure coefficient must be positive, got a={self.a}")
        if not self.gamma > 1:
            raise DomainError(f"adiabatic exponent must exceed 1, got gamma={self.gamma}")

    @property
    def lower_bound(self) -> float:
        """Constant ``p_`` with ``p_ rho**(gamma-1) <= p'(rho)`` for rho > 1."""
        return self.a * self.gamma

    @property
    def upper_bound(self) -> float:
        return self.a * self.gamma


@dataclass(frozen=True)
class EnergyDensityValue:
    value: float
    finite: bool = True

    def __float__(self):
        return self.value if self.finite else float("inf")


INFINITE = EnergyDensityValue(0.0, False)


def _check_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    return rho


def pressure(rho, params: EosParams):
    rho = _check_density(rho)
    return params.a * rho**params.gamma


def pressure_derivative(rho, params: EosParams):
    rho = _check_density(rho)
    return params.a * params.gamma * rho ** (params.gamma - 1.0)


def sound_speed(rho, params: EosParams):
    return np.sqrt(pressure_derivative(rho, params))


def pressure_potential(rho, params: EosParams):
    rho = _check_density(rho)
    return params.a * rho**params.gamma / (params.gamma - 1.0)


def potential_derivative(rho, params: EosParams):
    """``P'(rho) = a gamma rho**(gamma-1) / (gamma-1)``."""
    rho = _check_density(rho)
    return params.a * params.gamma / (params.gamma - 1.0) * rho ** (params.gamma - 1.0)


def energy_density(rho, m, u_ref, params: EosParams) -> EnergyDensityValue:
    """Energy density ``1/2 rho |m/rho - u_ref|^2 + P(rho)`` of a single state.

    Returns an infinite value for negative density or for vacuum carrying
    nonzero momentum, and zero at vacuum with zero momentum.
    """
    rho = float(rho)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    if rho < 0:
        return INFINITE
    if rho < VACUUM_TOL:
        return EnergyDensityValue(0.0) if not np.any(m) else INFINITE
    u = m / rho
    kinetic = 0.5 * rho * float(np.sum((u - u_ref) ** 2))
    return EnergyDensityValue(kinetic + float(pressure_potential(rho, params)))


def energy_density_field(rho, m, u_ref, params: EosParams):
    """Vectorised :func:`energy_density`.

    ``rho`` has shape ``S``, ``m`` and ``u_ref`` shape ``S + (d,)``.
    Returns ``(values, finite)`` where infinite entries hold 0 in ``values``.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    u_ref = np.broadcast_to(np.asarray(u_ref, dtype=float), m.shape)
    vac = rho < VACUUM_TOL
    finite = ~((rho < 0) | (vac & np.any(m != 0, axis=-1)))
    safe = np.where(vac, 1.0, rho)
    u = m / safe[..., None]
    kinetic = 0.5 * safe * np.sum((u - u_ref) ** 2, axis=-1)
    values = kinetic + params.a * np.clip(rho, 0, None) ** params.gamma / (params.gamma - 1.0)
    values = np.where(vac | ~finite, 0.0, values)
    return values, finite


def relative_energy_density(rho, m, rho_t, m_t, params: EosParams) -> EnergyDensityValue:
    """Relative energy of ``(rho, m)`` with respect to a reference ``(rho_t, m_t)``.

    This is the Bregman divergence of the convex energy
    ``E(rho, m) = |m|^2 / (2 rho) + P(rho)`` taken at the reference state.
    The reference density must be strictly positive.
    """
    rho_t = float(rho_t)
    if not rho_t > 0:
        raise DomainError(f"reference density must be positive, got {rho_t}")
    rho = float(rho)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    u_t = np.atleast_1d(np.asarray(m_t, dtype=float)) / rho_t
    if rho < 0:
        return INFINITE
    P = pressure_potential
    pressure_part = (
        float(P(rho, params))
        - float(potential_derivative(rho_t, params)) * (rho - rho_t)
        - float(P(rho_t, params))
    )
    if rho < VACUUM_TOL:
        if np.any(m):
            return INFINITE
        return EnergyDensityValue(max(pressure_part, 0.0))
    kinetic = 0.5 * rho * float(np.sum((m / rho - u_t) ** 2))
    return EnergyDensityValue(kinetic + max(pressure_part, 0.0))


def relative_energy_field(rho, m, rho_t, m_t, params: EosParams):
    """Vectorised :func:`relative_energy_density`; returns ``(values, finite)``."""
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    rho_t = np.asarray(rho_t, dtype=float)
    m_t = np.asarray(m_t, dtype=float)
    if np.any(rho_t <= 0):
        raise DomainError("reference density must be positive everywhere")
    vac = rho < VACUUM_TOL
    finite = ~((rho < 0) | (vac & np.any(m != 0, axis=-1)))
    rho_c = np.clip(rho, 0, None)
    pressure_part = (
        pressure_potential(rho_c, params)
        - potential_derivative(rho_t, params) * (rho_c - rho_t)
        - pressure_potential(rho_t, params)
    )
    safe = np.where(vac, 1.0, rho)
    du = m / safe[..., None] - m_t / rho_t[..., None]
    kinetic = np.where(vac, 0.0, 0.5 * safe * np.sum(du**2, axis=-1))
    values = np.where(finite, kinetic + np.clip(pressure_part, 0, None), 0.0)
    return values, finite


def quadratic_lower_bound_constant(
    r: float, params: EosParams, velocity_bound: float | None = None, samples: int = 64
) -> float:
    """Constant ``c(r) > 0`` for the quadratic coercivity of the relative energy.

    Guarantees, for reference states with ``1/r <= rho_t <= r`` and reference
    velocity ``|m_t / rho_t| <= velocity_bound`` (default ``r``)::

        E(rho, m | rho_t, m_t) >= c (|rho - rho_t|^2 + |m - m_t|^2)   if 1/(2r) <= rho <= 2r
        E(rho, m | rho_t, m_t) >= c (1 + rho**gamma + |m|^2 / rho)      otherwise

    The constant is half the minimum of the ratio over a deterministic
    ``samples**3`` grid (densities x relative speed), with the reference
    velocity placed where the ratio is smallest.
    """
    if not r > 1:
        raise DomainError(f"band bound must exceed 1, got r={r}")
    U = float(r if velocity_bound is None else velocity_bound)
    rho = np.linspace(0.5 / r, 2.0 * r, samples)
    rho_t = np.linspace(1.0 / r, r, samples)
    w = np.concatenate([[0.0], np.geomspace(1e-3, 1e3 * (1 + U), samples - 1)])
    R, Rt, W = np.meshgrid(rho, rho_t, w, indexing="ij")

    def pressure_gap(x, xt):
        return (
            pressure_potential(x, params)
            - potential_derivative(xt, params) * (x - xt)
            - pressure_potential(xt, params)
        )

    # relative velocity W, reference speed U aligned to maximise |m - m_t|
    num = 0.5 * R * W**2 + pressure_gap(R, Rt)
    den = (R * W + np.abs(R - Rt) * U) ** 2 + (R - Rt) ** 2
    ok = den > 1e-14
    band = np.min(num[ok] / den[ok])
    band = min(band, 1.0 / (4.0 * r))  # limit W -> infinity

    low = np.linspace(0.0, 0.5 / r, samples // 2, endpoint=False)
    high = np.geomspace(2.0 * r, 1e3 * r, samples // 2)
    rho_o = np.concatenate([low, high])
    R, Rt, W = np.meshgrid(rho_o, rho_t, w, indexing="ij")
    # m = rho (u_t + W) with |u_t| <= U, so |m|^2 / rho <= rho (U + W)^2
    num = 0.5 * R * W**2 + pressure_gap(R, Rt)
    den = 1.0 + R**params.gamma + R * (U + W) ** 2
    outside = np.min(num / den)
    outside = min(outside, 0.5)  # limit W -> infinity
    return 0.5 * float(min(band, outside))
