"""Continuous analogue of Newton's method for the split inner/outer problem.

Each iteration linearizes both domains around the current iterate, solves the
four linear BVPs per domain that share one factorization (the ``s, u, v, w``
decomposition), and fixes the increments ``(rho, omega, phi)`` of
``(R_s, Omega, phi_s)`` from the continuity of ``(nu, xi, eta)`` at ``x = 1``.
The damping ``tau`` follows the Ermakov-Kalitkin rule.
"""

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import collocation as col
from .collocation import BoundaryRows, HermiteGridFunction, LinearBVP
from .model import (
    ModelEvaluationError,
    ModelParams,
    jacobians_inner,
    jacobians_outer,
    rhs_inner,
    rhs_outer,
)
from .solution import ConvergenceReport, Solution, SpectralTriple

logger = logging.getLogger(__name__)

LAM, NU, PHI, XI, SIG, ETA, MU = range(7)
_MATCHED = (NU, XI, ETA)

# Lane-Emden first zero for the n = 3/2 polytrope
_LANE_EMDEN_XI1 = 3.65375

_INNER_LEFT = BoundaryRows.selector([1, 0, 0, 1, 1, 1, 1])
_INNER_RIGHT = BoundaryRows.selector([0, 0, 1, 0, 0, 0, 1])
# pure fermion stars pin nu_i(1) instead of mu_i(1); mu(1) = 0 moves into the matching
_INNER_RIGHT_PURE = BoundaryRows.selector([0, 1, 1, 0, 0, 0, 0])
_OUTER_LEFT = BoundaryRows.selector([1, 0, 1, 0, 1, 0])

FARFIELD_MODES = ("schwarzschild", "robin", "dirichlet")


class ConvergenceError(RuntimeError):
    """CANM did not reach the requested residual."""

    def __init__(self, message, report=None, state=None):
        super().__init__(message)
        self.report = report
        self.state = state


class StepFailure(np.linalg.LinAlgError):
    """Singular matching system."""

    def __init__(self, message, cond=np.inf):
        super().__init__(message)
        self.cond = cond


@dataclass(frozen=True)
class CanmConfig:
    """Iteration and discretization settings.

    ``r_max`` fixes the outer truncation radius; ``x_inf`` overrides it in
    scaled units.  ``farfield`` selects the ``nu`` condition at the
    truncation point: ``"schwarzschild"`` (``nu + lambda = 0``, exact for a
    vacuum exterior), ``"robin"`` (``nu + r nu' = 0``) or ``"dirichlet"``
    (``nu = 0``).
    """

    epsilon: float = 1e-10
    max_iter: int = 100
    freeze_threshold: float = 1e-3
    tau_min: float = 1e-3
    n_inner: int = 200
    n_outer: int = 400
    r_max: float = 200.0
    x_inf: Optional[float] = None
    outer_stretch: float = 100.0
    farfield: str = "schwarzschild"
    freeze: bool = True

    def __post_init__(self):
        if not 1e-12 <= self.epsilon <= 1e-8:
            raise ValueError(f"epsilon must lie in [1e-12, 1e-8], got {self.epsilon}")
        if not self.epsilon < self.freeze_threshold:
            raise ValueError("epsilon must be smaller than freeze_threshold")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.tau_min <= 1:
            raise ValueError("tau_min must lie in (0, 1]")
        if self.n_inner < 2 or self.n_outer < 2:
            raise ValueError("need at least 2 cells per domain")
        if self.farfield not in FARFIELD_MODES:
            raise ValueError(f"farfield must be one of {FARFIELD_MODES}, got {self.farfield!r}")
        if self.x_inf is not None and self.x_inf <= 1:
            raise ValueError("x_inf must exceed 1")
        if self.r_max <= 0 or self.outer_stretch <= 0:
            raise ValueError("r_max and outer_stretch must be positive")


@dataclass
class IterationState:
    inner: HermiteGridFunction
    outer: HermiteGridFunction
    spectral: SpectralTriple
    k: int = 0
    delta: float = np.inf
    mode: str = "full-Newton"


@dataclass(frozen=True)
class Increments:
    z_inner: HermiteGridFunction
    z_outer: HermiteGridFunction
    dR: float
    dOmega: float
    dPhiS: float


@dataclass
class Linearization:
    """Everything kept fixed during frozen-Jacobian iterations."""

    sys_inner: col.FactoredSystem
    sys_outer: col.FactoredSystem
    basis_inner: tuple
    basis_outer: tuple
    matching: np.ndarray
    cond: float
    R_s: float


def _is_pure(params):
    return params.sigma_c == 0


def optimal_tau(delta0, delta1, tau_min=1e-3):
    """Ermakov-Kalitkin step ``delta0 / (delta0 + delta1)`` clamped to ``[tau_min, 1]``."""
    if delta0 < 0 or delta1 < 0:
        raise ValueError("residuals must be non-negative")
    if delta0 == 0 and delta1 == 0:
        return 1.0
    if not np.isfinite(delta1):
        return tau_min
    tau = delta0 / (delta0 + delta1)
    return float(min(1.0, max(tau_min, tau)))


def _meshes(cfg, R_guess):
    x_inf = cfg.x_inf if cfg.x_inf is not None else max(cfg.r_max / R_guess, 2.0)
    inner = col.build_mesh(0.0, 1.0, cfg.n_inner)
    outer = col.build_mesh(
        1.0, x_inf, cfg.n_outer, "geometric", col.stretch_ratio(cfg.n_outer, cfg.outer_stretch), "left"
    )
    return inner, outer


def _lane_emden_radius(params):
    return _LANE_EMDEN_XI1 / (np.sqrt(params.b) * params.mu_c ** 0.25)


def _default_guess(params, cfg, R0=None, Omega0=0.9, phi_s0=0.0, width=None):
    R = _lane_emden_radius(params) if R0 is None else float(R0)
    w = 2.0 * _lane_emden_radius(params) if width is None else float(width)
    mi, me = _meshes(cfg, R)
    sc, mc = params.sigma_c, params.mu_c

    def profiles(x, inner):
        r = R * x
        n = 7 if inner else 6
        v = np.zeros((n, x.size))
        d = np.zeros((n, x.size))
        sig = sc * np.exp(-(r / w) ** 2)
        v[SIG] = sig
        v[ETA] = -2.0 * r / w ** 2 * sig
        d[SIG] = R * v[ETA]
        d[ETA] = R * (-2.0 / w ** 2 * sig + 4.0 * r * r / w ** 4 * sig)
        if inner:
            v[PHI] = phi_s0 * x * x
            d[PHI] = 2.0 * phi_s0 * x
            v[XI] = d[PHI] / R
            d[XI] = 2.0 * phi_s0 / R
            v[MU] = mc * (1.0 - x * x)
            d[MU] = -2.0 * mc * x
        else:
            decay = np.exp(-(x - 1.0) * R * max(params.gamma, 0.1))
            v[PHI] = phi_s0 * decay
            d[PHI] = -R * max(params.gamma, 0.1) * v[PHI]
            v[XI] = d[PHI] / R
            d[XI] = -R * max(params.gamma, 0.1) * d[PHI] / R
        return v, d

    vi, di = profiles(mi.nodes, True)
    ve, de = profiles(me.nodes, False)
    omega = None if _is_pure(params) else Omega0
    return IterationState(
        HermiteGridFunction(mi, vi, di),
        HermiteGridFunction(me, ve, de),
        SpectralTriple(R, omega, phi_s0),
    )


def _resample(grid, mesh):
    # carry a profile onto a new mesh; beyond the old end the metric tails fall off as 1/x
    old = grid.mesh
    x = mesh.nodes
    inside = np.clip(x, old.a, old.b)
    v, d = grid.evaluate(inside)
    beyond = x > old.b
    if np.any(beyond):
        scale = old.b / x[beyond]
        for k in range(grid.n_components):
            if k in (LAM, NU):
                v[k, beyond] = v[k, beyond] * scale
                d[k, beyond] = -v[k, beyond] / x[beyond]
            else:
                v[k, beyond] = 0.0
                d[k, beyond] = 0.0
    return HermiteGridFunction(mesh, v, d)


def initial_guess(params, cfg=None, overrides=None):
    """Starting iterate for :func:`solve`.

    ``overrides`` may be a converged :class:`Solution` (warm start), an
    :class:`IterationState`, or a dict with any of ``R_s``, ``Omega``,
    ``phi_s`` and ``width`` (the Gaussian width of the boson ansatz).
    """
    cfg = cfg or CanmConfig()
    if overrides is None:
        return _default_guess(params, cfg)
    if isinstance(overrides, dict):
        return _default_guess(
            params,
            cfg,
            overrides.get("R_s"),
            overrides.get("Omega", 0.9),
            overrides.get("phi_s", 0.0),
            overrides.get("width"),
        )
    spectral = overrides.spectral
    if _is_pure(params):
        spectral = replace(spectral, Omega=None)
    elif spectral.Omega is None:
        spectral = replace(spectral, Omega=0.9)
    mi, me = _meshes(cfg, spectral.R_s)
    inner, outer = overrides.inner, overrides.outer
    if inner.mesh.n_cells != mi.n_cells or not np.array_equal(inner.mesh.nodes, mi.nodes):
        inner = _resample(inner, mi)
    if cfg.x_inf is None and isinstance(overrides, Solution):
        # a warm start keeps the previous truncation unless the config pins it
        me = outer.mesh
    if outer.mesh.n_cells != me.n_cells or not np.array_equal(outer.mesh.nodes, me.nodes):
        outer = _resample(outer, me)
    if _is_pure(params):
        inner = HermiteGridFunction(inner.mesh, inner.values.copy(), inner.derivs.copy())
        outer = HermiteGridFunction(outer.mesh, outer.values.copy(), outer.derivs.copy())
        for g in (inner, outer):
            g.values[[SIG, ETA]] = 0.0
            g.derivs[[SIG, ETA]] = 0.0
    return IterationState(inner, outer, spectral)


class _Problem:
    """Discrete nonlinear problem for one parameter set and one pair of meshes."""

    def __init__(self, params, cfg):
        self.params = params
        self.cfg = cfg
        self.pure = _is_pure(params)
        self.farfield = cfg.farfield

    # -- residuals ---------------------------------------------------------
    def omega(self, spectral):
        return 0.0 if spectral.Omega is None else spectral.Omega

    def ode_defects(self, state):
        R = state.spectral.R_s
        Om = self.omega(state.spectral)
        out = []
        for grid, fn in ((state.inner, rhs_inner), (state.outer, rhs_outer)):
            xs = col.collocation_points(grid.mesh)
            v, d = col.values_at_points(grid)
            F = fn(xs, v, R, Om, self.params)
            out.append((xs, v, d, F, d - R * F))
        return out

    def outer_right_rows(self, x_inf):
        if self.farfield == "dirichlet":
            return BoundaryRows.selector([0, 1, 1, 0, 1, 0])
        B = np.zeros((3, 6))
        C = np.zeros((3, 6))
        B[0, NU] = 1.0
        if self.farfield == "robin":
            C[0, NU] = x_inf
        else:
            B[0, LAM] = 1.0
        B[1, PHI] = 1.0
        B[2, SIG] = 1.0
        return BoundaryRows(B, C)

    def boundary_residuals(self, state):
        p = self.params
        yi0 = state.inner.values[:, 0]
        yi1 = state.inner.values[:, -1]
        ye1 = state.outer.values[:, 0]
        yeX = state.outer.values[:, -1]
        deX = state.outer.derivs[:, -1]
        phi_s = state.spectral.phi_s
        x_inf = state.outer.mesh.b
        left_i = np.array([yi0[LAM], yi0[XI], yi0[SIG] - p.sigma_c, yi0[ETA], yi0[MU] - p.mu_c])
        if self.pure:
            right_i = np.array([0.0, yi1[PHI] - phi_s])
        else:
            right_i = np.array([yi1[PHI] - phi_s, yi1[MU]])
        left_e = np.array([ye1[LAM] - yi1[LAM], ye1[PHI] - phi_s, ye1[SIG] - yi1[SIG]])
        nu_row = yeX[NU]
        if self.farfield == "robin":
            nu_row = nu_row + x_inf * deX[NU]
        elif self.farfield == "schwarzschild":
            nu_row = nu_row + yeX[LAM]
        right_e = np.array([nu_row, yeX[PHI], yeX[SIG]])
        jumps = np.array([ye1[k] - yi1[k] for k in _MATCHED])
        if self.pure:
            jumps = np.concatenate((jumps, [yi1[MU]]))
        return left_i, right_i, left_e, right_e, jumps

    def defect(self, state):
        """Combined residual delta_f of the discrete nonlinear problem."""
        total = 0.0
        for grid, (xs, v, d, F, res) in zip((state.inner, state.outer), self.ode_defects(state)):
            w = col.simpson_weights(grid.mesh)
            total += float(np.sum(w * np.sum(res * res, axis=0)))
        for part in self.boundary_residuals(state):
            total += float(np.sum(part * part))
        return float(np.sqrt(total))

    def cc_mismatch(self, state):
        yi1 = state.inner.values[:, -1]
        ye1 = state.outer.values[:, 0]
        return np.array([ye1[k] - yi1[k] for k in _MATCHED])

    # -- linearization -----------------------------------------------------
    def linearize(self, state):
        p = self.params
        R = state.spectral.R_s
        Om = self.omega(state.spectral)
        n_i, n_e = 7, 6

        xs = col.collocation_points(state.inner.mesh)
        v, _ = col.values_at_points(state.inner)
        F = rhs_inner(xs, v, R, Om, p)
        Q, dR, dOm = jacobians_inner(xs, v, R, Om, p)
        right_i = _INNER_RIGHT_PURE if self.pure else _INNER_RIGHT
        bvp_i = LinearBVP(n_i, R * Q, _INNER_LEFT, right_i)
        sys_i = col.assemble(bvp_i, state.inner.mesh)
        zero_l = np.zeros(_INNER_LEFT.k)
        w_right = np.array([0.0, 1.0]) if self.pure else np.array([1.0, 0.0])
        u_i, v_i, w_i = col.solve_many(
            sys_i,
            [
                (-(F + R * dR), (zero_l, np.zeros(2))),
                (-R * dOm, (zero_l, np.zeros(2))),
                (None, (zero_l, w_right)),
            ],
        )

        xs = col.collocation_points(state.outer.mesh)
        v, _ = col.values_at_points(state.outer)
        F = rhs_outer(xs, v, R, Om, p)
        Q, dR, dOm = jacobians_outer(xs, v, R, Om, p)
        right_e = self.outer_right_rows(state.outer.mesh.b)
        bvp_e = LinearBVP(n_e, R * Q, _OUTER_LEFT, right_e)
        sys_e = col.assemble(bvp_e, state.outer.mesh)
        zr = np.zeros(3)

        def trace(g):
            t = g.values[:, -1]
            return t[LAM], t[SIG]

        lu, su = trace(u_i)
        lv, sv = trace(v_i)
        lw, sw = trace(w_i)
        u_e, v_e, w_e = col.solve_many(
            sys_e,
            [
                (-(F + R * dR), (np.array([lu, 0.0, su]), zr)),
                (-R * dOm, (np.array([lv, 0.0, sv]), zr)),
                (None, (np.array([lw, 1.0, sw]), zr)),
            ],
        )

        def jump(ge, gi, k):
            return ge.values[k, 0] - gi.values[k, -1]

        if self.pure:
            M = np.array(
                [
                    [u_i.values[MU, -1], w_i.values[MU, -1]],
                    [jump(u_e, u_i, XI), jump(w_e, w_i, XI)],
                ]
            )
        else:
            M = np.array(
                [[jump(u_e, u_i, k), jump(v_e, v_i, k), jump(w_e, w_i, k)] for k in _MATCHED]
            )
        cond = float(np.linalg.cond(_equilibrate(M)[0]))
        return Linearization(sys_i, sys_e, (u_i, v_i, w_i), (u_e, v_e, w_e), M, cond, R)

    def step(self, state, lin):
        """One decomposition solve at ``state`` with the factorizations in ``lin``."""
        p = self.params
        R = state.spectral.R_s
        phi_s = state.spectral.phi_s
        (xs_i, v_i, d_i, F_i, res_i), (xs_e, v_e, d_e, F_e, res_e) = self.ode_defects(state)
        left_i, right_i, left_e, right_e, jumps = self.boundary_residuals(state)

        s_i = col.solve_many(lin.sys_inner, [(res_i, (-left_i, -right_i))])[0]
        si1 = s_i.values[:, -1]
        s_left_e = -left_e + np.array([si1[LAM], 0.0, si1[SIG]])
        s_e = col.solve_many(lin.sys_outer, [(res_e, (s_left_e, -right_e))])[0]

        def jump(ge, gi, k):
            return ge.values[k, 0] - gi.values[k, -1]

        u_i, v_i_, w_i = lin.basis_inner
        u_e, v_e_, w_e = lin.basis_outer
        if self.pure:
            rhs = -np.array([state.inner.values[MU, -1] + s_i.values[MU, -1], jumps[1] + jump(s_e, s_i, XI)])
        else:
            rhs = -np.array([jumps[j] + jump(s_e, s_i, k) for j, k in enumerate(_MATCHED)])
        coef = _solve_matching(lin.matching, rhs)
        if self.pure:
            rho, omega, phi = coef[0], 0.0, coef[1]
        else:
            rho, omega, phi = coef
        z_i = s_i + rho * u_i + phi * w_i
        z_e = s_e + rho * u_e + phi * w_e
        if not self.pure:
            z_i = z_i + omega * v_i_
            z_e = z_e + omega * v_e_
        else:
            # nu_i only enters through its own equation: shift it onto nu_e(1)
            shift = (state.outer.values[NU, 0] + z_e.values[NU, 0]) - (
                state.inner.values[NU, -1] + z_i.values[NU, -1]
            )
            vals = z_i.values.copy()
            vals[NU] += shift
            z_i = HermiteGridFunction(z_i.mesh, vals, z_i.derivs)
        inc = Increments(z_i, z_e, float(rho), float(omega), float(phi))
        return inc, s_i, s_e

    def trial(self, state, inc, tau):
        sp = state.spectral
        omega = None if sp.Omega is None else sp.Omega + tau * inc.dOmega
        R = sp.R_s + tau * inc.dR
        if not R > 0:
            return None
        # Omega >= 1 only admits box modes of the truncated domain
        if omega is not None and 0 < sp.Omega < 1 and not 0 < omega < 1:
            return None
        return IterationState(
            state.inner + inc.z_inner.scaled(tau),
            state.outer + inc.z_outer.scaled(tau),
            SpectralTriple(R, omega, sp.phi_s + tau * inc.dPhiS),
            state.k,
            state.delta,
            state.mode,
        )

    def delta(self, state, inc, tau):
        """Residual ``delta(tau)`` of the trial iterate, ``inf`` if it is unusable."""
        trial = self.trial(state, inc, tau)
        if trial is None:
            return np.inf, None
        try:
            with np.errstate(over="raise", invalid="raise"):
                df = self.defect(trial)
        except (ModelEvaluationError, FloatingPointError):
            return np.inf, None
        if not np.isfinite(df):
            return np.inf, None
        return max(df, (tau * inc.dR) ** 2, (tau * inc.dOmega) ** 2, (tau * inc.dPhiS) ** 2), trial


def _equilibrate(M):
    r = np.max(np.abs(M), axis=1)
    r[r == 0] = 1.0
    Ms = M / r[:, None]
    c = np.max(np.abs(Ms), axis=0)
    c[c == 0] = 1.0
    return Ms / c[None, :], r, c


def _solve_matching(M, rhs):
    Ms, r, c = _equilibrate(M)
    try:
        y = np.linalg.solve(Ms, rhs / r)
    except np.linalg.LinAlgError as exc:
        raise StepFailure(f"singular matching system: {exc}", np.inf) from exc
    return y / c


def canm_step(state, params, cfg=None):
    """Linearize at ``state`` and return ``(Increments, delta_f)``."""
    prob = _Problem(params, cfg or CanmConfig())
    lin = prob.linearize(state)
    inc, _, _ = prob.step(state, lin)
    return inc, prob.defect(state)


def residual_delta(state, params, increments, tau, cfg=None):
    """``max(delta_f(y + tau z), (tau rho)^2, (tau omega)^2, (tau phi)^2)``."""
    prob = _Problem(params, cfg or CanmConfig())
    return prob.delta(state, increments, tau)[0]


def defect(state, params, cfg=None):
    return _Problem(params, cfg or CanmConfig()).defect(state)


def _iterate(prob, state, history):
    """CANM loop from ``state``; appends to ``history`` and returns ``(state, converged, message)``."""
    cfg = prob.cfg
    lin = None
    frozen = False
    delta0 = prob.defect(state)
    state.delta = delta0
    for k in range(len(history), len(history) + cfg.max_iter):
        mode = "frozen-Jacobian" if frozen else "full-Newton"
        try:
            if not frozen or lin is None:
                lin = prob.linearize(state)
            inc, _, _ = prob.step(state, lin)
        except (col.CollocationError, StepFailure, np.linalg.LinAlgError, ModelEvaluationError) as exc:
            if delta0 < cfg.epsilon:
                return state, True, f"stopped on ill-conditioning with delta={delta0:.3e}: {exc}"
            return state, False, f"step {k} failed: {exc}"
        delta1, _ = prob.delta(state, inc, 1.0)
        tau = optimal_tau(delta0, delta1, cfg.tau_min)
        delta_tau, trial = prob.delta(state, inc, tau)
        while trial is None and tau > 1e-8:
            tau *= 0.5
            delta_tau, trial = prob.delta(state, inc, tau)
        if trial is None:
            return state, False, f"step {k}: no admissible damping"
        if frozen and delta_tau > delta0:
            # the frozen Jacobian stopped contracting: refresh and redo this step
            history.append(_log(k, mode, delta0, delta1, tau, delta_tau, inc, lin, rejected=True))
            frozen = False
            lin = None
            continue
        history.append(_log(k, mode, delta0, delta1, tau, delta_tau, inc, lin))
        logger.debug("iter %d %s delta0=%.3e tau=%.3f delta=%.3e", k, mode, delta0, tau, delta_tau)
        trial.k = k + 1
        trial.delta = delta_tau
        trial.mode = mode
        state = trial
        if delta_tau < cfg.epsilon:
            return state, True, ""
        delta0 = prob.defect(state)
        if cfg.freeze and not frozen and delta_tau < cfg.freeze_threshold:
            frozen = True
    return state, False, ""


# converged runs whose r_max = R_s x_inf misses the requested value by more than this are remeshed
_REMESH_TOLERANCE = 0.05


def solve(params, cfg=None, guess=None):
    """Iterate CANM to ``delta < epsilon``.

    Pure fermion configurations (``sigma_c == 0``) drop ``Omega`` from the
    unknowns automatically.  Unless ``cfg.x_inf`` pins the truncation, a
    run whose converged radius moves ``R_s x_inf`` away from ``cfg.r_max``
    is resampled onto a corrected outer mesh and iterated again.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is exhausted or a step cannot be completed; the
        residual history travels with the exception.
    """
    from .observables import compute_observables

    cfg = cfg or CanmConfig()
    if not isinstance(params, ModelParams):
        raise TypeError("params must be a ModelParams")
    prob = _Problem(params, cfg)
    state = initial_guess(params, cfg, guess)
    history = []
    warn = []
    state, converged, message = _iterate(prob, state, history)
    # entries carry the pass index: the remesh pass restarts the residual sequence
    for h in history:
        h.setdefault("pass", 0)
    if converged and cfg.x_inf is None:
        R = state.spectral.R_s
        if abs(R * state.outer.mesh.b - cfg.r_max) > _REMESH_TOLERANCE * cfg.r_max:
            mi, me = _meshes(cfg, R)
            state = IterationState(_resample(state.inner, mi), _resample(state.outer, me), state.spectral)
            state, converged, message = _iterate(prob, state, history)
            for h in history:
                h.setdefault("pass", 1)

    Om = state.spectral.Omega
    if Om is not None and not 0 < Om < 1:
        msg = f"Omega={Om:.6g} outside (0, 1): boson field is not localized"
        warn.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    sig = np.concatenate((state.inner.values[SIG], state.outer.values[SIG]))
    if converged and params.sigma_c > 0 and np.any(sig < -1e-8 * params.sigma_c):
        msg = "sigma changes sign: converged to an excited boson state"
        warn.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    accepted = [h for h in history if not h.get("rejected")]
    report = ConvergenceReport(
        converged=converged,
        iterations=len(accepted),
        residual=float(state.delta),
        history=history,
        warnings=warn,
        message=message,
    )
    sol = Solution(params, state.spectral, state.inner, state.outer, None, report, asdict(cfg))
    if not converged:
        raise ConvergenceError(
            message or f"no convergence in {cfg.max_iter} iterations (delta={state.delta:.3e})",
            report,
            sol,
        )
    sol.observables = compute_observables(sol)
    return sol


def pure_fermion_solve(params, cfg=None, guess=None):
    """Solve a configuration without bosons (``sigma_c == 0``)."""
    if params.sigma_c != 0:
        raise ValueError("pure_fermion_solve requires sigma_c == 0")
    return solve(params, cfg, guess)


def _log(k, mode, delta0, delta1, tau, delta_tau, inc, lin, rejected=False):
    entry = {
        "k": k,
        "mode": mode,
        "delta0": float(delta0),
        "delta1": float(delta1),
        "tau": float(tau),
        "delta": float(delta_tau),
        "rho": inc.dR,
        "omega": inc.dOmega,
        "phi": inc.dPhiS,
        "cond": None if lin is None else lin.cond,
    }
    if rejected:
        entry["rejected"] = True
    return entry


def contraction_constant(deltas):
    """Least-squares ``C`` in ``delta_{k+1} = C delta_k^2`` over consecutive pairs."""
    d = np.asarray(deltas, dtype=float)
    d = d[d > 0]
    if d.size < 2:
        return np.nan
    return float(np.exp(np.mean(np.log(d[1:]) - 2.0 * np.log(d[:-1]))))
