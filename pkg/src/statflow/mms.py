"""Manufactured solution for 1D channel flow with inflow at x=0 and outflow at x=L.

The target fields are

    rho*(t, x) = rho0 + A sin(2 pi (x - t) / L)
    u*(x)      = U (1 + c x (L - x) / L^2)

so ``u* = U`` on both ends: the left face is inflow, the right face outflow.
Sources in the mass and momentum equations make these fields an exact
solution; the inflow density follows ``rho*(t, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eos import EosParams
from .grid import BoundaryData, FieldState, Grid, build_grid


@dataclass(frozen=True)
class ManufacturedChannel:
    eos: EosParams
    lam: float
    mu: float = 0.0
    rho0: float = 2.0
    amplitude: float = 0.1
    speed: float = 1.0
    bulge: float = 0.5
    length: float = 1.0

    # exact fields -------------------------------------------------------
    def _phase(self, t, x):
        return 2.0 * np.pi * (x - t) / self.length

    def rho(self, t, x):
        return self.rho0 + self.amplitude * np.sin(self._phase(t, x))

    def rho_t(self, t, x):
        return -2.0 * np.pi / self.length * self.amplitude * np.cos(self._phase(t, x))

    def rho_x(self, t, x):
        return 2.0 * np.pi / self.length * self.amplitude * np.cos(self._phase(t, x))

    def u(self, x):
        L = self.length
        return self.speed * (1.0 + self.bulge * x * (L - x) / L**2)

    def u_x(self, x):
        L = self.length
        return self.speed * self.bulge * (L - 2.0 * x) / L**2

    def u_xx(self, x):
        return -2.0 * self.speed * self.bulge / self.length**2 + 0.0 * x

    # sources -------------------------------------------------------------
    def mass_source_at(self, t, x):
        return self.rho_t(t, x) + self.rho_x(t, x) * self.u(x) + self.rho(t, x) * self.u_x(x)

    def momentum_source_at(self, t, x):
        r, u, ux = self.rho(t, x), self.u(x), self.u_x(x)
        dp = self.eos.a * self.eos.gamma * r ** (self.eos.gamma - 1.0)
        # in 1D the shear part of the stress cancels, S = lam u_x
        return (
            self.rho_t(t, x) * u
            + self.rho_x(t, x) * u**2
            + 2.0 * r * u * ux
            + dp * self.rho_x(t, x)
            - self.lam * self.u_xx(x)
        )

    # forcing protocol --------------------------------------------------------
    def mass_source(self, t, grid: Grid):
        return self.mass_source_at(t, grid.cell_centers()[..., 0])

    def momentum_source(self, t, grid: Grid):
        return self.momentum_source_at(t, grid.cell_centers()[..., 0])[..., None]

    def inflow_density(self, t, grid: Grid, bd: BoundaryData):
        x = grid.boundary_centers()[:, 0]
        return self.rho(t, x)

    # setup helpers -----------------------------------------------------------
    def grid(self, cells: int) -> Grid:
        return build_grid(1, self.length, cells)

    def boundary(self, grid: Grid) -> BoundaryData:
        rho_floor = self.rho0 - abs(self.amplitude)
        return BoundaryData.from_functions(
            grid,
            rho_b=lambda x: self.rho(0.0, x[..., 0]),
            u_b=lambda x: self.u(x[..., 0])[..., None],
            rho_floor=0.5 * rho_floor,
        )

    def state(self, t, grid: Grid) -> FieldState:
        x = grid.cell_centers()[..., 0]
        r = self.rho(t, x)
        return FieldState(r, (r * self.u(x))[..., None])

    def l1_error(self, state: FieldState, t, grid: Grid) -> float:
        ref = self.state(t, grid)
        h = grid.cell_volume
        return float(np.sum(np.abs(state.rho - ref.rho)) * h + np.sum(np.abs(state.mom - ref.mom)) * h)
