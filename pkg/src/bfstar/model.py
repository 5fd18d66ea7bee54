"""Scalar-tensor boson-fermion star model in dimensionless form.

Coupling function, potentials, equation of state, stress-tensor components
and the first-order right-hand sides for the interior (7 components) and the
exterior (6 components).

State vectors are component-first: ``y`` has shape ``(n,)`` for a single point
or ``(n, m)`` for ``m`` points.  Component order is
``(lambda, nu, phi, xi, sigma, eta[, mu])`` where ``xi = dphi/dr`` and
``eta = dsigma/dr`` are derivatives with respect to the unscaled radius.

Every function here is holomorphic in its arguments away from the clamp at
``mu = 0``, so the Jacobians are obtained by complex-step differentiation,
which is exact to rounding.
"""

from dataclasses import dataclass

import numpy as np

SQRT3 = np.sqrt(3.0)
ALPHA = 1.0 / SQRT3

# below this Fermi momentum f and g are summed from their series in sqrt(mu)
MU_SERIES = 1e-2
_N_SERIES = 10

INNER_NAMES = ("lambda", "nu", "phi", "xi", "sigma", "eta", "mu")
OUTER_NAMES = INNER_NAMES[:6]

_COMPLEX_STEP = 1e-30


def _binom_half(a, k):
    c = 1.0
    for j in range(k):
        c *= (a - j) / (j + 1)
    return c


# f = int_0^x t^4 / sqrt(1+t^2) dt, g = 3 int_0^x t^2 sqrt(1+t^2) dt, x = sqrt(mu)
_F_COEF = np.array([_binom_half(-0.5, k) / (5 + 2 * k) for k in range(_N_SERIES)])
_G_COEF = np.array([3.0 * _binom_half(0.5, k) / (3 + 2 * k) for k in range(_N_SERIES)])


class ModelEvaluationError(FloatingPointError):
    """Right-hand side produced a non-finite value."""

    def __init__(self, component, x=None):
        self.component = component
        self.x = x
        name = INNER_NAMES[component] if component < len(INNER_NAMES) else component
        where = "" if x is None else f" at x={x!r}"
        super().__init__(f"non-finite right-hand side in component {component} ({name}){where}")


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one star configuration.

    Attributes
    ----------
    gamma : float
        Dilaton-to-boson mass ratio.
    Lambda : float
        Boson quartic self-coupling.
    b : float
        Fermion energy scale relative to the boson scale.
    sigma_c : float
        Central boson amplitude.
    mu_c : float
        Central Fermi momentum.
    """

    gamma: float = 0.1
    Lambda: float = 10.0
    b: float = 1.0
    sigma_c: float = 0.4
    mu_c: float = 1.2

    def __post_init__(self):
        for name in ("gamma", "Lambda", "b", "sigma_c", "mu_c"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.Lambda < 0:
            raise ValueError(f"Lambda must be >= 0, got {self.Lambda}")
        if self.b <= 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if self.sigma_c < 0:
            raise ValueError(f"sigma_c must be >= 0, got {self.sigma_c}")
        if self.mu_c <= 0:
            raise ValueError(
                f"mu_c must be > 0 (pure boson stars are not supported), got {self.mu_c}"
            )


@dataclass(frozen=True)
class StressBundle:
    t00_F: np.ndarray
    t11_F: np.ndarray
    t00_B: np.ndarray
    t11_B: np.ndarray
    trace_F: np.ndarray
    trace_B: np.ndarray


def coupling(phi):
    """Return ``(A, alpha)`` with ``A = exp(phi/sqrt(3))`` and ``alpha = dlnA/dphi``."""
    A = np.exp(phi / SQRT3)
    return A, ALPHA * np.ones_like(A)


def dilaton_potential(phi):
    """Return ``(V, dV/dphi)`` for ``V = 3/2 (1 - A^2)^2``."""
    A2 = np.exp(2.0 * phi / SQRT3)
    one_minus = -np.expm1(2.0 * phi / SQRT3)
    V = 1.5 * one_minus * one_minus
    Vp = -2.0 * SQRT3 * A2 * one_minus
    return V, Vp


def boson_potential(s, Lambda):
    """Return ``(W, dW/ds)`` of the quartic boson potential at ``s = sigma^2``."""
    W = -0.5 * (s + 0.5 * Lambda * s * s)
    Wp = -0.5 * (1.0 + Lambda * s)
    return W, Wp


def _eos(mu):
    # clamped, complex-safe EOS: f, g, f', n all vanish for mu <= 0
    mu = np.asarray(mu)
    re = mu.real
    pos = re > 0
    small = pos & (re < MU_SERIES)
    big = re >= MU_SERIES
    m = np.where(pos, mu, 1.0)
    sq = np.sqrt(m)
    s1 = np.sqrt(1.0 + m)
    with np.errstate(all="ignore"):
        ash = np.arcsinh(sq)
        root = sq * s1
        f_closed = 0.125 * ((2.0 * m - 3.0) * root + 3.0 * ash)
        g_closed = 0.125 * ((6.0 * m + 3.0) * root - 3.0 * ash)
    mk = np.ones_like(m)
    f_ser = np.zeros_like(m)
    g_ser = np.zeros_like(m)
    for k in range(_N_SERIES):
        f_ser = f_ser + _F_COEF[k] * mk
        g_ser = g_ser + _G_COEF[k] * mk
        mk = mk * m
    m32 = m * sq
    f_ser = f_ser * m32 * m
    g_ser = g_ser * m32
    f = np.where(big, f_closed, np.where(small, f_ser, 0.0))
    g = np.where(big, g_closed, np.where(small, g_ser, 0.0))
    fp = np.where(pos, 0.5 * m32 / s1, 0.0)
    n = np.where(pos, m32, 0.0)
    return f, g, fp, n


def eos(mu):
    """Ideal neutron gas in parametric form.

    Parameters
    ----------
    mu : float or array_like
        Dimensionless Fermi momentum, ``mu >= 0``.

    Returns
    -------
    f, g, fp, n
        Pressure function, energy function, ``df/dmu`` and fermion density
        ``mu**1.5``.
    """
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0):
        raise ValueError("eos is defined for mu >= 0 only")
    return _eos(mu_arr)


def _source_ratio(mu):
    # (g + f) / f' == 2 (1 + mu) identically; the series and the closed form coincide
    return 2.0 * (1.0 + mu)


def eos_source_ratio(mu, direct=False):
    """Return ``(g + f) / f'``, regular at the stellar surface where it tends to 2.

    With ``direct=True`` the quotient is formed from the EOS functions, which
    is only meaningful away from ``mu = 0``.
    """
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0):
        raise ValueError("eos_source_ratio is defined for mu >= 0 only")
    if direct:
        f, g, fp, _ = _eos(mu_arr)
        return (g + f) / fp
    return _source_ratio(mu_arr)


def stress(phi, xi, sigma, eta, nu, lam, mu, Omega, params):
    """Dimensionless stress components of the fermion and boson matter.

    ``mu=None`` switches the fermion part off.  ``xi`` is accepted for
    signature symmetry with the field equations; the stresses do not depend
    on it.
    """
    A, _ = coupling(phi)
    A2 = A * A
    A4 = A2 * A2
    W, _ = boson_potential(sigma * sigma, params.Lambda)
    kinetic = Omega * Omega * sigma * sigma * np.exp(-nu)
    gradient = eta * eta * np.exp(-lam)
    t00_B = 0.5 * A2 * (kinetic + gradient) - A4 * W
    t11_B = -0.5 * A2 * (kinetic + gradient) - A4 * W
    trace_B = -A2 * (kinetic - gradient) - 4.0 * A4 * W
    if mu is None:
        zero = np.zeros_like(t00_B)
        return StressBundle(zero, zero, t00_B, t11_B, zero, trace_B)
    f, g, _, _ = _eos(mu)
    bA4 = params.b * A4
    return StressBundle(bA4 * g, -bA4 * f, t00_B, t11_B, bA4 * (g - 3.0 * f), trace_B)


def _rhs(r, y, Omega, params, inner):
    lam, nu, phi, xi, sigma, eta = y[0], y[1], y[2], y[3], y[4], y[5]
    mu = y[6] if inner else None
    gamma2 = params.gamma * params.gamma

    A, alpha = coupling(phi)
    V, Vp = dilaton_potential(phi)
    _, Wp = boson_potential(sigma * sigma, params.Lambda)
    st = stress(phi, xi, sigma, eta, nu, lam, mu, Omega, params)

    el = np.exp(lam)
    em1 = np.expm1(lam)
    center = r == 0
    rs = np.where(center, 1.0, r)

    F1 = -em1 / rs + rs * (el * (st.t00_F + st.t00_B + 0.5 * gamma2 * V) + xi * xi)
    F2 = em1 / rs - rs * (el * (st.t11_F + st.t11_B + 0.5 * gamma2 * V) - xi * xi)
    half = 0.5 * (F1 - F2)
    S3 = 0.5 * el * (alpha * (st.trace_F + st.trace_B) + 0.5 * gamma2 * Vp)
    S4 = -sigma * el * (Omega * Omega * np.exp(-nu) + 2.0 * A * A * Wp)
    F3 = -2.0 * xi / rs + half * xi + S3
    F4 = -2.0 * eta / rs + (half - 2.0 * alpha * xi) * eta + S4

    # regular centre: the 1/r terms are removable given lambda = xi = eta = 0
    F1 = np.where(center, 0.0, F1)
    F2 = np.where(center, 0.0, F2)
    F3 = np.where(center, S3 / 3.0, F3)
    F4 = np.where(center, S4 / 3.0, F4)

    out = [F1, F2, xi + 0.0 * F1, F3, eta + 0.0 * F1, F4]
    if inner:
        out.append(-_source_ratio(mu) * (0.5 * F2 + alpha * xi))
    return np.stack(out)


def _check_finite(F, x):
    bad = ~np.isfinite(F)
    if bad.any():
        idx = np.argwhere(bad)[0]
        xs = np.atleast_1d(np.real(x))
        where = float(xs[idx[-1]]) if xs.size > 1 else float(xs[0])
        raise ModelEvaluationError(int(idx[0]), where)
    return F


def rhs_inner(x, y, R_s, Omega, params):
    """Interior right-hand side ``F_i`` in r-units at ``r = R_s * x``.

    The caller multiplies by ``R_s`` for the scaled system ``y' = R_s F_i``.
    At ``x = 0`` the regular-centre limits are returned.
    """
    y = np.asarray(y)
    r = np.asarray(x) * R_s
    return _check_finite(_rhs(r, y, Omega, params, inner=True), x)


def rhs_outer(x, y, R_s, Omega, params):
    """Exterior right-hand side ``F_e`` in r-units, no fermion matter."""
    y = np.asarray(y)
    r = np.asarray(x) * R_s
    return _check_finite(_rhs(r, y, Omega, params, inner=False), x)


def _jacobians(x, y, R_s, Omega, params, inner):
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    h = _COMPLEX_STEP
    x = np.asarray(x, dtype=float)
    Q = np.empty((n, n) + y.shape[1:])
    for j in range(n):
        yc = y.astype(complex)
        yc[j] = yc[j] + 1j * h
        Q[:, j] = _rhs(x * R_s, yc, Omega, params, inner).imag / h
    dF_dRs = _rhs(x * (R_s + 1j * h), y.astype(complex), Omega, params, inner).imag / h
    dF_dOmega = _rhs(x * R_s, y.astype(complex), Omega + 1j * h, params, inner).imag / h
    _check_finite(Q, x)
    return Q, dF_dRs, dF_dOmega


def jacobians_inner(x, y, R_s, Omega, params):
    """Derivatives of ``F_i``: ``(dF/dy, dF/dR_s, dF/dOmega)``.

    ``dF/dR_s`` is taken at fixed ``x`` and ``y`` and therefore equals
    ``x * dF/dr``.  For ``m`` points ``Q`` has shape ``(7, 7, m)``.
    """
    return _jacobians(x, y, R_s, Omega, params, inner=True)


def jacobians_outer(x, y, R_s, Omega, params):
    """Derivatives of ``F_e``, see :func:`jacobians_inner`."""
    return _jacobians(x, y, R_s, Omega, params, inner=False)
