"""Converged-solution record shared by the solver, observables and the CLI."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .collocation import HermiteGridFunction, Mesh
from .model import INNER_NAMES, OUTER_NAMES, ModelParams


@dataclass(frozen=True)
class SpectralTriple:
    """Star radius, boson frequency and interface dilaton value.

    ``Omega`` is ``None`` for pure fermion stars, where it is not an unknown.
    """

    R_s: float
    Omega: Optional[float]
    phi_s: float

    def __post_init__(self):
        if not self.R_s > 0:
            raise ValueError(f"R_s must be positive, got {self.R_s}")


@dataclass(frozen=True)
class Observables:
    M: float
    M_RB: float
    M_RF: float
    E_b: float


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    message: str = ""

    @property
    def deltas(self):
        return [h["delta"] for h in self.history]

    @property
    def taus(self):
        return [h["tau"] for h in self.history]

    @property
    def modes(self):
        return [h["mode"] for h in self.history]


@dataclass
class Solution:
    params: ModelParams
    spectral: SpectralTriple
    inner: HermiteGridFunction
    outer: HermiteGridFunction
    observables: Optional[Observables] = None
    report: Optional[ConvergenceReport] = None
    config: dict = field(default_factory=dict)

    @property
    def pure_fermion(self):
        return self.spectral.Omega is None

    @property
    def x_inf(self):
        return float(self.outer.mesh.b)

    @property
    def r_max(self):
        return self.spectral.R_s * self.x_inf

    def profile_table(self, domain):
        """Columns ``x, r`` followed by the state components of one domain."""
        grid = self.inner if domain == "inner" else self.outer
        names = INNER_NAMES if domain == "inner" else OUTER_NAMES
        x = grid.mesh.nodes
        cols = {"x": x, "r": self.spectral.R_s * x}
        for k, name in enumerate(names):
            cols[name] = grid.values[k]
        return cols

    def to_dict(self):
        def grid(g):
            return {
                "nodes": g.mesh.nodes.tolist(),
                "grading": g.mesh.grading,
                "values": g.values.tolist(),
                "derivs": g.derivs.tolist(),
            }

        rep = None
        if self.report is not None:
            rep = {
                "converged": self.report.converged,
                "iterations": self.report.iterations,
                "residual": self.report.residual,
                "history": self.report.history,
                "warnings": self.report.warnings,
                "message": self.report.message,
            }
        return {
            "params": asdict(self.params),
            "spectral": asdict(self.spectral),
            "inner": grid(self.inner),
            "outer": grid(self.outer),
            "observables": None if self.observables is None else asdict(self.observables),
            "report": rep,
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, d):
        def grid(g):
            mesh = Mesh(np.array(g["nodes"], dtype=float), g["grading"])
            return HermiteGridFunction(
                mesh, np.array(g["values"], dtype=float), np.array(g["derivs"], dtype=float)
            )

        rep = None if d.get("report") is None else ConvergenceReport(**d["report"])
        obs = None if d.get("observables") is None else Observables(**d["observables"])
        return cls(
            params=ModelParams(**d["params"]),
            spectral=SpectralTriple(**d["spectral"]),
            inner=grid(d["inner"]),
            outer=grid(d["outer"]),
            observables=obs,
            report=rep,
            config=dict(d.get("config", {})),
        )
