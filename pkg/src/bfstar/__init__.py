"""Boson-fermion stars in scalar-tensor gravity with a massive dilaton.

The solver splits the star into the fermion interior ``0 <= x <= 1`` and the
exterior ``x >= 1`` (``x = r / R_s``), discretizes both with cubic Hermite
collocation and iterates a damped Newton method on the profiles together
with the spectral data ``(R_s, Omega, phi_s)``.
"""

from .canm import CanmConfig, ConvergenceError, initial_guess, pure_fermion_solve, solve
from .estimator import StarSolver
from .model import ModelParams
from .observables import compute_observables
from .solution import Observables, Solution, SpectralTriple

__version__ = "0.1.0"

__all__ = [
    "CanmConfig",
    "ConvergenceError",
    "ModelParams",
    "Observables",
    "Solution",
    "SpectralTriple",
    "StarSolver",
    "compute_observables",
    "initial_guess",
    "pure_fermion_solve",
    "solve",
]
