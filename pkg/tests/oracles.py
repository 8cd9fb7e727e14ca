"""Independent reference implementations used to check the package.

None of these import statflow internals; they recompute quantities from
first principles (symbolic algebra, dense linear algebra, brute force,
finite differences).
"""

from __future__ import annotations

import itertools

import numpy as np
import sympy as sp


# EOS / Bregman ---------------------------------------------------------------------------
def potential(rho, a, gamma):
    return a * np.asarray(rho, float) ** gamma / (gamma - 1.0)


def convex_energy(rho, m, a, gamma):
    """``|m|^2 / (2 rho) + P(rho)`` for rho > 0."""
    m = np.atleast_1d(np.asarray(m, float))
    return float(np.dot(m, m) / (2.0 * rho) + potential(rho, a, gamma))


def bregman_fd(rho, m, rho_t, m_t, a, gamma, h=1e-6):
    """Bregman divergence of the convex energy with a central-difference gradient at the base point."""
    m = np.atleast_1d(np.asarray(m, float))
    m_t = np.atleast_1d(np.asarray(m_t, float))
    x_t = np.concatenate([[rho_t], m_t])
    x = np.concatenate([[rho], m])

    def F(v):
        return convex_energy(v[0], v[1:], a, gamma)

    grad = np.zeros_like(x_t)
    for i in range(len(x_t)):
        step = h * max(1.0, abs(x_t[i]))
        e = np.zeros_like(x_t)
        e[i] = step
        grad[i] = (F(x_t + e) - F(x_t - e)) / (2 * step)
    return F(x) - F(x_t) - float(np.dot(grad, x - x_t))


# spectral basis ----------------------------------------------------------------------------
def dirichlet_laplacian_1d(n, length=1.0):
    """Cell-centred Dirichlet Laplacian (odd ghost reflection) as a dense matrix."""
    h = length / n
    A = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h**2
    A[0, 0] = A[-1, -1] = 3.0 / h**2
    return A


def dense_eigenpairs(n, length=1.0):
    return np.linalg.eigh(dirichlet_laplacian_1d(n, length))


def dirichlet_laplacian_2d(nx, ny, lx=1.0, ly=1.0):
    Ax, Ay = dirichlet_laplacian_1d(nx, lx), dirichlet_laplacian_1d(ny, ly)
    return np.kron(Ax, np.eye(ny)) + np.kron(np.eye(nx), Ay)


# optimal transport -----------------------------------------------------------------------
def permutation_minimum(C):
    """Exact OT between uniform measures of equal size: the best assignment, by brute force."""
    n = C.shape[0]
    return min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


# manufactured solution ---------------------------------------------------------------------
def manufactured_sources(a, gamma, lam, rho0=2.0, amplitude=0.1, speed=1.0, bulge=0.5, length=1.0):
    """Symbolic mass and momentum sources for the 1D manufactured channel.

    Fields: ``rho = rho0 + A sin(2 pi (x - t) / L)`` and ``u = U (1 + b x (L - x) / L^2)``.
    The 1D system is ``rho_t + (rho u)_x = s`` and
    ``(rho u)_t + (rho u^2 + p)_x - (lam u_x)_x = f``.
    Returns vectorised callables ``s(t, x)`` and ``f(t, x)``.
    """
    t, x = sp.symbols("t x", real=True)
    rho = rho0 + amplitude * sp.sin(2 * sp.pi * (x - t) / length)
    u = speed * (1 + bulge * x * (length - x) / length**2)
    p = a * rho**gamma
    s = sp.diff(rho, t) + sp.diff(rho * u, x)
    f = sp.diff(rho * u, t) + sp.diff(rho * u**2 + p, x) - sp.diff(lam * sp.diff(u, x), x)
    return sp.lambdify((t, x), sp.simplify(s), "numpy"), sp.lambdify((t, x), f, "numpy")


def manufactured_fields(rho0=2.0, amplitude=0.1, speed=1.0, bulge=0.5, length=1.0):
    def rho(t, x):
        return rho0 + amplitude * np.sin(2 * np.pi * (x - t) / length)

    def u(t, x):
        return speed * (1 + bulge * x * (length - x) / length**2) + 0 * t

    return rho, u
