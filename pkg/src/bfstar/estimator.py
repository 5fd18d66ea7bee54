"""scikit-learn style front end to the star solver."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .canm import CanmConfig, solve
from .model import INNER_NAMES, ModelParams


class StarSolver(BaseEstimator):
    """Solve for one boson-fermion star and evaluate its profiles.

    ``fit`` runs the collocation Newton solver for the configured model
    parameters; there is no training data, so ``X`` and ``y`` are accepted
    only for pipeline compatibility and ignored.  ``predict`` maps radii
    ``r`` to the state vector.

    Parameters
    ----------
    gamma, Lambda, b, sigma_c, mu_c : float
        Model parameters: dilaton mass, boson self-coupling, boson/fermion
        mass ratio parameter and central values of ``sigma`` and ``mu``.
    epsilon : float
        Residual at which the iteration stops.
    max_iter : int
    n_inner, n_outer : int
        Collocation cells in the star and in the exterior.
    r_max : float
        Outer truncation radius.
    farfield : {"schwarzschild", "robin", "dirichlet"}
    warm_start : bool
        Reuse the previous solution as the starting guess on refit.

    Attributes
    ----------
    solution_ : Solution
    R_s_, Omega_, phi_s_ : float
        Spectral data; ``Omega_`` is ``None`` for pure fermion stars.
    observables_ : Observables
    n_iter_ : int

    Examples
    --------
    >>> est = StarSolver(sigma_c=0.4, mu_c=1.2).fit()  # doctest: +SKIP
    >>> est.predict([0.0, 1.0, 10.0]).shape  # doctest: +SKIP
    (3, 7)
    """

    def __init__(
        self,
        gamma=0.1,
        Lambda=10.0,
        b=1.0,
        sigma_c=0.4,
        mu_c=1.2,
        epsilon=1e-10,
        max_iter=100,
        n_inner=200,
        n_outer=400,
        r_max=200.0,
        farfield="schwarzschild",
        warm_start=False,
    ):
        self.gamma = gamma
        self.Lambda = Lambda
        self.b = b
        self.sigma_c = sigma_c
        self.mu_c = mu_c
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.n_inner = n_inner
        self.n_outer = n_outer
        self.r_max = r_max
        self.farfield = farfield
        self.warm_start = warm_start

    def _model_params(self):
        return ModelParams(self.gamma, self.Lambda, self.b, self.sigma_c, self.mu_c)

    def _config(self):
        return CanmConfig(
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            n_inner=self.n_inner,
            n_outer=self.n_outer,
            r_max=self.r_max,
            farfield=self.farfield,
        )

    def fit(self, X=None, y=None):
        """Solve the configured star.

        Raises
        ------
        ValueError
            For invalid parameters.
        ConvergenceError
            When the solver does not converge.
        """
        params = self._model_params()
        cfg = self._config()
        guess = None
        if self.warm_start and hasattr(self, "solution_"):
            guess = self.solution_
        sol = solve(params, cfg, guess)
        self.solution_ = sol
        self.R_s_ = float(sol.spectral.R_s)
        self.Omega_ = None if sol.spectral.Omega is None else float(sol.spectral.Omega)
        self.phi_s_ = float(sol.spectral.phi_s)
        self.observables_ = sol.observables
        self.n_iter_ = sol.report.iterations
        return self

    def predict(self, r):
        """State ``(lambda, nu, phi, xi, sigma, eta, mu)`` at radii ``r``.

        ``mu`` is zero outside the star.  Radii beyond the truncation point
        are rejected.

        Returns
        -------
        ndarray of shape (len(r), 7)
        """
        check_is_fitted(self, "solution_")
        r = column_or_1d(np.asarray(r, dtype=float), warn=True)
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise ValueError("radii must be finite and non-negative")
        sol = self.solution_
        if np.any(r > sol.r_max * (1 + 1e-12)):
            raise ValueError(f"radii must not exceed r_max={sol.r_max:.6g}")
        x = r / self.R_s_
        out = np.zeros((r.size, len(INNER_NAMES)))
        inside = x <= 1.0
        if inside.any():
            out[inside] = sol.inner.evaluate(x[inside])[0].T
        if (~inside).any():
            out[~inside, :6] = sol.outer.evaluate(x[~inside])[0].T
        return out

    def score(self, X=None, y=None):
        """Negative final residual, so that larger is better."""
        check_is_fitted(self, "solution_")
        return -float(self.solution_.report.residual)
