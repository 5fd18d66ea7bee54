"""Shooting solver used to cross-check the collocation results.

The inner system is integrated from a regular centre to ``x = 1`` and the
outer system from the truncation point ``X`` inward to ``x = 1``, both with
an embedded 8(5,3) Runge-Kutta pair.  A damped Newton iteration with a
finite-difference Jacobian drives the interface mismatch to zero.

The far-field data are those of the truncated collocation problem
(``phi = sigma = 0`` at ``X`` and the same ``nu`` condition).  The
slopes ``xi(X)`` and ``eta(X)`` are seeded on the decaying modes
``exp(-gamma r)`` and ``exp(-sqrt(1 - Omega^2) r)`` with amplitudes that
join the shooting unknowns.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelEvaluationError, ModelParams, dilaton_potential, rhs_inner, rhs_outer, stress
from .solution import SpectralTriple

LAM, NU, PHI, XI, SIG, ETA, MU = range(7)

_X0 = 1e-4


class ShootingError(RuntimeError):
    """Integration blew up; ``x`` is the last abscissa reached."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class OracleConvergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True)
class ShootingUnknowns:
    """Full shooting vector.

    ``nu0`` and ``phi0`` are the central values; ``lam_X`` is ``lambda`` at
    the truncation point and ``a_phi``, ``a_sigma`` the decaying-mode
    amplitudes defining ``xi(X)`` and ``eta(X)``.  ``Omega`` and ``a_sigma``
    are ignored for pure fermion stars.
    """

    R_s: float
    Omega: Optional[float]
    nu0: float
    phi0: float
    lam_X: float
    a_phi: float
    a_sigma: float = 0.0

    def to_vector(self, pure):
        if pure:
            return np.array([self.R_s, self.phi0, self.lam_X, self.a_phi])
        return np.array([self.R_s, self.Omega, self.nu0, self.phi0, self.lam_X, self.a_phi, self.a_sigma])

    @classmethod
    def from_vector(cls, v, pure, nu0=0.0):
        if pure:
            return cls(v[0], None, nu0, v[1], v[2], v[3], 0.0)
        return cls(*[float(t) for t in v])


@dataclass
class ShootResult:
    """Terminal states of both integrations and the interface mismatch.

    ``mismatch`` holds the ``(nu, xi, eta)`` jumps ``outer - inner`` at
    ``x = 1`` (``(mu_i(1), xi)`` for pure fermion stars, where ``nu`` is
    fixed by a shift); ``residual`` is the full set of shooting conditions.
    """

    unknowns: ShootingUnknowns
    inner_terminal: np.ndarray
    outer_terminal: np.ndarray
    mismatch: np.ndarray
    residual: np.ndarray
    inner_dense: object = field(default=None, repr=False)
    outer_dense: object = field(default=None, repr=False)
    x_inf: float = np.nan

    @property
    def spectral(self):
        return SpectralTriple(self.unknowns.R_s, self.unknowns.Omega, float(self.inner_terminal[PHI]))

    def profiles(self, x, domain):
        """Interpolated state at scaled abscissae ``x`` of one domain."""
        dense = self.inner_dense if domain == "inner" else self.outer_dense
        y = dense(np.asarray(x, dtype=float))
        if domain == "inner" and self.unknowns.Omega is None:
            # nu is defined up to a constant inside a pure fermion star
            y = y.copy()
            y[NU] += self.outer_terminal[NU] - self.inner_terminal[NU]
        return y


def _decay_rates(params, Omega):
    k_phi = max(params.gamma, 1e-3)
    k_sig = np.sqrt(max(1.0 - (Omega or 0.0) ** 2, 1e-6))
    return k_phi, k_sig


def _centre_state(params, u, x0):
    """Second-order expansion about the regular centre, at ``x = x0``."""
    p = params
    R, Om = u.R_s, (u.Omega or 0.0)
    sc = 0.0 if u.Omega is None else p.sigma_c
    st = stress(u.phi0, 0.0, sc, 0.0, u.nu0, 0.0, p.mu_c, Om, p)
    V, _ = dilaton_potential(u.phi0)
    y0 = np.array([0.0, u.nu0, u.phi0, 0.0, sc, 0.0, p.mu_c])
    F0 = rhs_inner(np.zeros(1), y0[:, None], R, Om, p)[:, 0]
    c3, c4 = F0[XI], F0[ETA]
    rho = float(st.t00_F + st.t00_B + 0.5 * p.gamma ** 2 * V)
    pres = float(st.t11_F + st.t11_B + 0.5 * p.gamma ** 2 * V)
    a = rho / 3.0
    b = 0.5 * (a - pres)
    ratio = 2.0 * (1.0 + p.mu_c)
    sqrt3 = np.sqrt(3.0)
    r = R * x0
    y = y0.copy()
    y[LAM] = a * r * r
    y[NU] += b * r * r
    y[PHI] += 0.5 * c3 * r * r
    y[XI] = c3 * r
    y[SIG] += 0.5 * c4 * r * r
    y[ETA] = c4 * r
    y[MU] -= 0.5 * ratio * (b + c3 / sqrt3) * r * r
    return y


def _far_state(params, u, x_inf, farfield):
    R, Om = u.R_s, (u.Omega or 0.0)
    k_phi, k_sig = _decay_rates(params, u.Omega)
    dr = R * (x_inf - 1.0)
    y = np.zeros(6)
    y[LAM] = u.lam_X
    y[XI] = u.a_phi * k_phi * np.exp(-k_phi * dr)
    if u.Omega is not None:
        y[ETA] = -u.a_sigma * k_sig * np.exp(-k_sig * dr)
    if farfield == "robin":
        # sigma = 0 there, so F2 does not depend on nu
        F = rhs_outer(np.array([x_inf]), y[:, None], R, Om, params)[:, 0]
        y[NU] = -x_inf * R * F[NU]
    elif farfield == "schwarzschild":
        y[NU] = -u.lam_X
    return y


def _integrate(fun, span, y0, tol):
    # the far-field seeds are exponentially small, so only relative control is meaningful
    atol = np.full(y0.size, 1e-80)
    try:
        sol = solve_ivp(fun, span, y0, method="DOP853", rtol=tol, atol=atol, dense_output=True)
    except ModelEvaluationError as exc:
        raise ShootingError(f"integration blew up: {exc}", getattr(exc, "x", None)) from exc
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        x = float(sol.t[-1]) if sol.t.size else None
        raise ShootingError(f"integration failed near x={x}: {sol.message}", x)
    return sol


def _run_inner(params, u, tol):
    R, Om = u.R_s, (u.Omega or 0.0)

    def f(x, y):
        return R * rhs_inner(np.array([x]), y[:, None], R, Om, params)[:, 0]

    return _integrate(f, (_X0, 1.0), _centre_state(params, u, _X0), tol)


def _run_outer(params, u, x_inf, farfield, tol, stop=1.0):
    R, Om = u.R_s, (u.Omega or 0.0)

    def f(x, y):
        return R * rhs_outer(np.array([x]), y[:, None], R, Om, params)[:, 0]

    return _integrate(f, (x_inf, stop), _far_state(params, u, x_inf, farfield), tol)


def _anchor(grid, k, level):
    # outermost node where the collocation field still exceeds ``level`` of its peak
    v = np.abs(grid.values[k])
    idx = np.flatnonzero(v > level * v.max()) if v.max() > 0 else np.array([], int)
    return None if idx.size == 0 else idx[-1]


def _rescale_amplitudes(solution, u, tol, farfield, level=1e-3, sweeps=4):
    """Scale the far-field amplitudes so the inward tails match the
    collocation fields where those are still well resolved.

    Between the anchor radius and the far boundary the tails are linear in
    their amplitudes, so a ratio update converges in a few sweeps even when
    the amplitudes read at the far boundary are off by orders of magnitude.
    """
    p, outer, X = solution.params, solution.outer, solution.x_inf
    targets = [(PHI, "a_phi")]
    if u.Omega is not None:
        targets.append((SIG, "a_sigma"))
    anchors = []
    for k, name in targets:
        j = _anchor(outer, k, level)
        if j is not None and outer.mesh.nodes[j] < X:
            anchors.append((k, name, float(outer.mesh.nodes[j]), float(outer.values[k, j])))
    if not anchors:
        return u
    stop = min(a[2] for a in anchors)
    for _ in range(sweeps):
        try:
            sol = _run_outer(p, u, X, farfield, tol, stop=stop)
        except ShootingError:
            break
        change = {}
        for k, name, x, want in anchors:
            got = float(sol.sol(x)[k])
            if got == 0.0 or not np.isfinite(got) or np.sign(got) != np.sign(want):
                continue
            change[name] = getattr(u, name) * want / got
        if not change:
            break
        done = all(abs(v / getattr(u, n) - 1.0) < 1e-6 for n, v in change.items())
        u = replace(u, **change)
        if done:
            break
    return u


def _combine(params, u, inner, outer, x_inf):
    pure = u.Omega is None
    yi, ye = inner.y[:, -1], outer.y[:, -1]
    jump = ye - yi[:6]
    if pure:
        mismatch = np.array([yi[MU], jump[XI]])
        residual = np.array([yi[MU], jump[LAM], jump[PHI], jump[XI]])
    else:
        mismatch = jump[[NU, XI, ETA]]
        residual = np.concatenate(([yi[MU]], jump))

    def dense_in(x):
        x = np.asarray(x, dtype=float)
        y = inner.sol(np.clip(x, _X0, 1.0))
        # below the starting point the centre series is the better interpolant
        for j in np.flatnonzero(np.atleast_1d(x) < _X0):
            y[:, j] = _centre_state(params, u, float(np.atleast_1d(x)[j]))
        return y

    return ShootResult(u, yi, ye, mismatch, residual, dense_in, outer.sol, x_inf)


def _check(params, trial, tol):
    if not trial.R_s > 0:
        raise ValueError("R_s must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if params.sigma_c == 0 and trial.Omega is not None:
        trial = ShootingUnknowns(trial.R_s, None, trial.nu0, trial.phi0, trial.lam_X, trial.a_phi, 0.0)
    return trial


def shoot(params, trial, tol=1e-12, x_inf=None, farfield="schwarzschild", r_max=200.0):
    """Integrate both domains for one set of shooting unknowns.

    Parameters
    ----------
    params : ModelParams
    trial : ShootingUnknowns
    tol : float
        Relative tolerance of the integrator.
    x_inf : float, optional
        Truncation point in scaled units; defaults to ``r_max / R_s``.

    Returns
    -------
    ShootResult

    Raises
    ------
    ShootingError
        If either integration overflows; ``x`` carries the location.
    """
    trial = _check(params, trial, tol)
    X = r_max / trial.R_s if x_inf is None else float(x_inf)
    inner = _run_inner(params, trial, tol)
    outer = _run_outer(params, trial, X, farfield, tol)
    return _combine(params, trial, inner, outer, X)


def _layout(pure):
    # indices of the unknowns that touch only one of the two integrations
    if pure:
        return [1], [2, 3]
    return [2, 3], [4, 5, 6]


def _newton(run, v, fixed_cols, target, newton_tol, max_iter, fd_step, admissible):
    """Damped Newton over the columns of ``v`` not in ``fixed_cols``."""
    cols = [j for j in range(v.size) if j not in fixed_cols]
    res = run(v, None)
    F = target(res)
    history = [float(np.max(np.abs(F)))]
    for k in range(max_iter):
        if history[-1] < newton_tol:
            return v, res, k, history
        J = np.empty((F.size, len(cols)))
        for c, j in enumerate(cols):
            h = fd_step * max(1.0, abs(v[j]))
            vp = v.copy()
            vp[j] += h
            J[:, c] = (target(run(vp, (j, res))) - F) / h
        dv = np.zeros_like(v)
        dv[cols] = np.linalg.lstsq(J, -F, rcond=None)[0]
        t = 1.0
        while True:
            trial_v = v + t * dv
            try:
                if not admissible(trial_v):
                    raise ShootingError("inadmissible trial")
                trial = run(trial_v, None)
                if np.max(np.abs(target(trial))) < (1.0 - 0.25 * t) * history[-1] or t < 1e-4:
                    break
            except ShootingError:
                if t < 1e-4:
                    raise
            t *= 0.5
        v, res = trial_v, trial
        F = target(res)
        history.append(float(np.max(np.abs(F))))
    if history[-1] < newton_tol:
        return v, res, max_iter, history
    raise OracleConvergenceError(f"shooting did not converge (residual {history[-1]:.3e})", history)


def _runner(params, pure, nu0, tol, x_inf, farfield):
    inner_only, outer_only = _layout(pure)
    cache = {}

    def run(v, base):
        u = ShootingUnknowns.from_vector(v, pure, nu0)
        if base is not None:
            j, res = base
            if j in outer_only:
                return _combine(params, u, cache["inner"], _run_outer(params, u, x_inf, farfield, tol), x_inf)
            if j in inner_only:
                return _combine(params, u, _run_inner(params, u, tol), cache["outer"], x_inf)
        inner = _run_inner(params, u, tol)
        outer = _run_outer(params, u, x_inf, farfield, tol)
        if base is None:
            cache["inner"], cache["outer"] = inner, outer
        return _combine(params, u, inner, outer, x_inf)

    return run


def fit_far_field(params, trial, x_inf, tol=1e-12, farfield="schwarzschild", newton_tol=1e-10):
    """Adjust ``lam_X`` and the decaying-mode amplitudes at fixed ``(R_s, Omega, nu0, phi0)``.

    The fit zeroes the ``lambda``, ``phi`` and ``sigma`` jumps at ``x = 1``,
    leaving the ``(nu, xi, eta)`` mismatch as the measure of how far the
    spectral data are from a shooting root.
    """
    trial = _check(params, trial, tol)
    pure = trial.Omega is None
    inner_only, outer_only = _layout(pure)
    run = _runner(params, pure, trial.nu0, tol, x_inf, farfield)
    rows = [1, 2] if pure else [1, 3, 5]
    v, res, _, _ = _newton(
        run,
        trial.to_vector(pure),
        [0, 1] + inner_only if not pure else [0] + inner_only,
        lambda r: r.residual[rows],
        newton_tol,
        20,
        1e-7,
        lambda v: True,
    )
    return ShootingUnknowns.from_vector(v, pure, trial.nu0), res


def unknowns_from_solution(solution, refine=False, tol=1e-12):
    """Shooting unknowns read off a collocation :class:`Solution`.

    With ``refine=True`` the far-field seeds are refitted by
    :func:`fit_far_field`, since the collocation tail is only resolved to a
    fixed absolute accuracy where the seeds are exponentially small.
    """
    p = solution.params
    sp = solution.spectral
    R = sp.R_s
    X = solution.x_inf
    dr = R * (X - 1.0)
    k_phi, k_sig = _decay_rates(p, sp.Omega)
    ye = solution.outer.values[:, -1]
    a_phi = ye[XI] / (k_phi * np.exp(-k_phi * dr))
    a_sigma = 0.0 if sp.Omega is None else -ye[ETA] / (k_sig * np.exp(-k_sig * dr))
    yi0 = solution.inner.values[:, 0]
    u = ShootingUnknowns(R, sp.Omega, float(yi0[NU]), float(yi0[PHI]), float(ye[LAM]), float(a_phi), float(a_sigma))
    if refine:
        farfield = solution.config.get("farfield", "schwarzschild")
        u = _rescale_amplitudes(solution, u, tol, farfield)
        u, _ = fit_far_field(p, u, X, tol, farfield)
    return u


@dataclass
class OracleSolution:
    spectral: SpectralTriple
    result: ShootResult
    iterations: int
    history: list


def shoot_solve(params, initial, tol=1e-12, x_inf=None, farfield="schwarzschild", r_max=200.0,
                newton_tol=1e-10, max_iter=40, fd_step=1e-7):
    """Damped Newton on the shooting conditions.

    Parameters
    ----------
    params : ModelParams
    initial : ShootingUnknowns or Solution
        Starting point; a collocation solution is converted with
        ``unknowns_from_solution(..., refine=True)`` and also supplies
        ``x_inf`` and the far-field mode.

    Returns
    -------
    OracleSolution

    Raises
    ------
    OracleConvergenceError
        When the residual does not reach ``newton_tol``.
    """
    if not isinstance(params, ModelParams):
        raise TypeError("params must be a ModelParams")
    if not isinstance(initial, ShootingUnknowns):
        if x_inf is None:
            x_inf = initial.x_inf
        farfield = initial.config.get("farfield", farfield)
        initial = unknowns_from_solution(initial, refine=True, tol=tol)
    initial = _check(params, initial, tol)
    pure = initial.Omega is None
    X = r_max / initial.R_s if x_inf is None else float(x_inf)
    run = _runner(params, pure, initial.nu0, tol, X, farfield)

    def admissible(v):
        return v[0] > 0 and (pure or 0 < v[1] < 1)

    v, res, k, history = _newton(
        run, initial.to_vector(pure), [], lambda r: r.residual, newton_tol, max_iter, fd_step, admissible
    )
    return OracleSolution(res.spectral, res, k, history)


def oracle_observables(params, result, rtol=1e-10):
    """Mass integrals over the shooting profiles by adaptive quadrature.

    Independent of the collocation quadrature; used to cross-check
    :func:`bfstar.observables.compute_observables`.

    Returns
    -------
    Observables
    """
    from scipy.integrate import quad

    from .model import coupling
    from .solution import Observables

    R = result.unknowns.R_s
    Om = result.unknowns.Omega or 0.0
    boson = result.unknowns.Omega is not None and params.sigma_c > 0

    def state(r, domain):
        return result.profiles(np.array([r / R]), domain)[:, 0]

    def mass(r, domain):
        y = state(r, domain)
        mu = y[MU] if domain == "inner" else None
        st = stress(y[PHI], y[XI], y[SIG], y[ETA], y[NU], y[LAM], mu, Om, params)
        V, _ = dilaton_potential(y[PHI])
        return r * r * (st.t00_B + st.t00_F + np.exp(-y[LAM]) * y[XI] ** 2 + 0.5 * params.gamma ** 2 * V)

    def rest_b(r, domain):
        y = state(r, domain)
        A, _ = coupling(y[PHI])
        return r * r * A * A * np.exp(0.5 * (y[LAM] - y[NU])) * y[SIG] ** 2

    def rest_f(r):
        y = state(r, "inner")
        A, _ = coupling(y[PHI])
        return r * r * A ** 3 * np.exp(0.5 * y[LAM]) * max(y[MU], 0.0) ** 1.5

    r_max = R * result.x_inf
    # geometric breakpoints keep the adaptive rule focused on the decaying tail
    edges = np.unique(np.concatenate(([R], R * np.geomspace(1.0, result.x_inf, 12))))

    def both(fn):
        total = quad(fn, 0.0, R, args=("inner",), epsabs=0.0, epsrel=rtol, limit=200)[0]
        for a, b in zip(edges[:-1], edges[1:]):
            total += quad(fn, a, min(b, r_max), args=("outer",), epsabs=0.0, epsrel=rtol, limit=200)[0]
        return total

    M = both(mass)
    M_RB = Om * both(rest_b) if boson else 0.0
    M_RF = params.b * quad(rest_f, 0.0, R, epsabs=0.0, epsrel=rtol, limit=200)[0]
    return Observables(M, M_RB, M_RF, M - M_RB - M_RF)
