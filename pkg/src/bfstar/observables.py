"""Mass integrals of a converged star."""

import numpy as np

from .model import coupling, dilaton_potential, stress
from .solution import Observables

LAM, NU, PHI, XI, SIG, ETA, MU = range(7)


def _cell_quadrature(mesh, n_gauss):
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    h = mesh.widths
    x = mesh.nodes[:-1, None] + 0.5 * h[:, None] * (t[None, :] + 1.0)
    return x.ravel(), (0.5 * h[:, None] * w[None, :]).ravel()


def _omega(solution):
    Om = solution.spectral.Omega
    return 0.0 if Om is None else Om


def _integrate(solution, domain, integrand, n_gauss, per_cell=False):
    grid = solution.inner if domain == "inner" else solution.outer
    R = solution.spectral.R_s
    x, w = _cell_quadrature(grid.mesh, n_gauss)
    y, _ = grid.evaluate(x)
    r = R * x
    vals = integrand(r, y) * r * r * R * w
    if per_cell:
        return vals.reshape(-1, n_gauss).sum(axis=1)
    return float(np.sum(vals))


def _mass_density(solution, inner):
    p = solution.params
    Om = _omega(solution)

    def f(r, y):
        mu = y[MU] if inner else None
        st = stress(y[PHI], y[XI], y[SIG], y[ETA], y[NU], y[LAM], mu, Om, p)
        V, _ = dilaton_potential(y[PHI])
        return (st.t00_B + st.t00_F + np.exp(-y[LAM]) * y[XI] ** 2
                + 0.5 * p.gamma ** 2 * V)

    return f


def _boson_density(solution):
    def f(r, y):
        A, _ = coupling(y[PHI])
        return A * A * np.exp(0.5 * (y[LAM] - y[NU])) * y[SIG] ** 2

    return f


def _fermion_density(solution):
    def f(r, y):
        A, _ = coupling(y[PHI])
        n = np.maximum(y[MU], 0.0) ** 1.5
        return A ** 3 * np.exp(0.5 * y[LAM]) * n

    return f


def total_mass(solution, n_gauss=4, split=False):
    """``M = int r^2 (T00_B + T00_F + e^-lambda phi'^2 + gamma^2 V / 2) dr``.

    The integral is truncated at the end of the outer mesh.  ``split=True``
    returns the inner and outer contributions separately.
    """
    inner = _integrate(solution, "inner", _mass_density(solution, True), n_gauss)
    outer = _integrate(solution, "outer", _mass_density(solution, False), n_gauss)
    if split:
        return inner, outer
    return inner + outer


def boson_rest_mass(solution, n_gauss=4, split=False):
    """``M_RB = Omega int r^2 A^2 exp((lambda - nu)/2) sigma^2 dr``."""
    Om = _omega(solution)
    if Om == 0.0 or solution.params.sigma_c == 0:
        return (0.0, 0.0) if split else 0.0
    inner = Om * _integrate(solution, "inner", _boson_density(solution), n_gauss)
    outer = Om * _integrate(solution, "outer", _boson_density(solution), n_gauss)
    if split:
        return inner, outer
    return inner + outer


def fermion_rest_mass(solution, n_gauss=4):
    """``M_RF = b int_0^R_s r^2 A^3 exp(lambda/2) mu^(3/2) dr``."""
    return solution.params.b * _integrate(solution, "inner", _fermion_density(solution), n_gauss)


def binding_energy(obs):
    """``E_b = M - M_RB - M_RF`` from an :class:`Observables` or a 3-tuple."""
    if isinstance(obs, Observables):
        M, M_RB, M_RF = obs.M, obs.M_RB, obs.M_RF
    else:
        M, M_RB, M_RF = obs
    return M - M_RB - M_RF


def compute_observables(solution, n_gauss=4):
    M = total_mass(solution, n_gauss)
    M_RB = boson_rest_mass(solution, n_gauss)
    M_RF = fermion_rest_mass(solution, n_gauss)
    return Observables(M, M_RB, M_RF, binding_energy((M, M_RB, M_RF)))


def truncation_diagnostic(solution, n_gauss=4):
    """Magnitude of the mass integrand contributions in the last outer cell."""
    mass = _integrate(solution, "outer", _mass_density(solution, False), n_gauss, per_cell=True)
    boson = _integrate(solution, "outer", _boson_density(solution), n_gauss, per_cell=True)
    return {"M_last_cell": float(abs(mass[-1])), "M_RB_last_cell": float(abs(boson[-1]))}


def schwarzschild_mass(solution):
    """``r (1 - e^-lambda)`` at the outer edge, equal to ``M`` for an exact solution."""
    lam = solution.outer.values[LAM, -1]
    return float(solution.r_max * -np.expm1(-lam))


__all__ = [
    "total_mass",
    "boson_rest_mass",
    "fermion_rest_mass",
    "binding_energy",
    "compute_observables",
    "truncation_diagnostic",
    "schwarzschild_mass",
]
