"""Energies and variational functionals of a solution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DiskDomain, RadialDomain, SquareDomain


@dataclass(frozen=True)
class EnergyReport:
    E_quadratic: float  # 1/2 int rho psi
    E_dirichlet: float  # 1/2 int |grad psi|^2, independent gradient quadrature
    J: float
    Psi: float | None
    gap: float

    @property
    def E(self):
        return self.E_quadratic


def gradient_energy(domain, u):
    """1/2 int |grad u|^2 from second-order centered gradients and the domain weights.

    Deliberately a different discretization from the stiffness form, so the
    difference to 1/2 int rho psi measures discretization error.
    """
    if isinstance(domain, SquareDomain):
        g = domain.grid(u)
        gx, gy = np.gradient(g, domain.h, edge_order=2)
        return 0.5 * domain.integrate((gx**2 + gy**2).ravel())
    if isinstance(domain, RadialDomain):
        du = np.gradient(u, domain.r, edge_order=2)
        return 0.5 * domain.integrate(du**2)
    if isinstance(domain, DiskDomain):
        core = domain.radial
        g = domain.grid(u)
        dr = np.gradient(g, core.r, axis=0, edge_order=2)
        k = np.fft.rfftfreq(domain.n_theta, 1.0 / domain.n_theta)
        dth = np.fft.irfft(1j * k * np.fft.rfft(g, axis=1), n=domain.n_theta, axis=1)
        integrand = dr**2 + (dth / core.r[:, None]) ** 2
        return 0.5 * domain.integrate(integrand.ravel())
    raise TypeError(f"unsupported domain {domain!r}")


def free_energy(solution, rho=None):
    """J(rho) = p/(p+1) int rho^(1+1/p) - lambda/2 int rho G[rho] on the core grid."""
    core = solution.core
    rho = solution.rho_core if rho is None else rho
    p = solution.p
    return p / (p + 1) * core.integrate(np.abs(rho) ** (1 + 1 / p)) - 0.5 * solution.lam * core.integrate(
        rho * core.green_apply(rho)
    )


def primal_functional(solution, v_core, gamma, I):
    """Psi_I(v) = 1/2 int |grad v|^2 - 1/(p+1) int v_+^(p+1) + I gamma, v = gamma on the boundary."""
    core = solution.core
    p = solution.p
    return (
        core.dirichlet_energy(v_core - gamma)
        - core.integrate(np.maximum(v_core, 0.0) ** (p + 1)) / (p + 1)
        + I * gamma
    )


def primal_directional_derivative(solution, h0, c):
    """Derivative of Psi_I at v_I along h = h0 + c (h0 zero on the boundary, c constant)."""
    from .state import to_free_boundary

    core = solution.core
    fb = to_free_boundary(solution)
    v = solution.domain.restrict(fb.v) if fb.v.size != core.n_nodes else fb.v
    I_ = core.interior
    grad_term = float((v - fb.gamma)[I_] @ (core.stiffness @ h0[I_]))
    vp = np.maximum(v, 0.0) ** solution.p
    return grad_term - core.integrate(vp * (h0 + c)) + fb.I * c


def energy(solution):
    core = solution.core
    Eq = 0.5 * core.integrate(solution.rho_core * solution.psi_core)
    Ed = gradient_energy(core, solution.psi_core)
    J = free_energy(solution)
    Psi = None
    if solution.p > 1 and solution.lam > 0:
        from .state import to_free_boundary

        fb = to_free_boundary(solution)
        v = solution.domain.restrict(fb.v)
        Psi = primal_functional(solution, v, fb.gamma, fb.I)
    return EnergyReport(Eq, Ed, J, Psi, abs(Eq - Ed))


def torsion_energy(domain):
    """E_0 = 1/2 int G[1]."""
    core = domain.core
    return 0.5 * core.integrate(core.green_apply(np.ones(core.n_nodes)))


def lambda_star_disk(p, Lambda_p1):
    """Positivity threshold on the disk from Lambda(D, p+1)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return (8 * np.pi / (p + 1)) ** ((p - 1) / (2 * p)) * Lambda_p1 ** ((p + 1) / (2 * p))
