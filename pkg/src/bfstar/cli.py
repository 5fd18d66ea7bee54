"""Command line driver: single solves and warm-started parameter sweeps.

Exit codes: 0 on success, 1 on I/O failure, 2 when a solve (or any sweep
point) does not converge, 3 on configuration errors.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .canm import FARFIELD_MODES, CanmConfig, ConvergenceError, solve
from .model import INNER_NAMES, OUTER_NAMES, ModelParams

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_IO, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2, 3
EMIT_CHOICES = ("csv", "json", "svg")
SWEEP_PARAMS = ("mu_c", "sigma_c")
MAX_HALVINGS = 3

# option name -> (destination, parser); the config file uses the same names
_OPTIONS = {
    "gamma": ("gamma", float),
    "lambda-self": ("Lambda", float),
    "b": ("b", float),
    "sigma-c": ("sigma_c", float),
    "mu-c": ("mu_c", float),
    "x-inf": ("x_inf", float),
    "r-max": ("r_max", float),
    "cells-inner": ("n_inner", int),
    "cells-outer": ("n_outer", int),
    "eps": ("epsilon", float),
    "max-iter": ("max_iter", int),
    "farfield": ("farfield", str),
    "sweep-param": ("sweep_param", str),
    "sweep-range": ("sweep_range", str),
    "sweep-count": ("sweep_count", int),
    "warm-start": ("warm_start", "bool"),
    "verify": ("verify", "bool"),
    "out-dir": ("out_dir", str),
    "emit": ("emit", str),
}

_DEFAULTS = {
    "gamma": 0.1,
    "Lambda": 10.0,
    "b": 1.0,
    "sigma_c": 0.4,
    "mu_c": 1.2,
    "x_inf": None,
    "r_max": 200.0,
    "n_inner": 200,
    "n_outer": 400,
    "epsilon": 1e-10,
    "max_iter": 100,
    "farfield": "schwarzschild",
    "sweep_param": "mu_c",
    "sweep_range": None,
    "sweep_count": 1,
    "warm_start": True,
    "verify": False,
    "out_dir": ".",
    "emit": "csv,json",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending flag or line."""


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    count: int
    warm_start: bool = True

    def values(self):
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    canm: CanmConfig
    sweep: SweepSpec
    out_dir: Path
    emit: frozenset = field(default_factory=lambda: frozenset({"csv", "json"}))
    verify: bool = False


def _parse_bool(text, where):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {text!r}")


def _convert(key, raw, where):
    dest, kind = _OPTIONS[key]
    if kind == "bool":
        return dest, _parse_bool(raw, where)
    if dest == "x_inf" and (raw is None or str(raw).strip().lower() in ("", "none")):
        return dest, None
    try:
        return dest, kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None


def read_config_file(path):
    """Flat ``key = value`` file with ``#`` comments; keys mirror the long flags."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        where = f"{path}:{n}"
        if "=" not in text:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, raw = (t.strip() for t in text.split("=", 1))
        key = key.replace("_", "-")
        if key not in _OPTIONS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        dest, value = _convert(key, raw, where)
        values[dest] = value
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bfstar",
        description="Boson-fermion stars with a massive dilaton: collocation Newton solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "solve one configuration"), ("sweep", "warm-started parameter sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="flat key=value file; flags override its values")
        p.add_argument("--gamma", type=float, help="dilaton mass ratio (default 0.1)")
        p.add_argument("--lambda-self", type=float, help="boson self-coupling Lambda (default 10)")
        p.add_argument("--b", type=float, help="fermion scale b (default 1)")
        p.add_argument("--sigma-c", type=float, help="central boson amplitude (default 0.4; 0 for pure fermion)")
        p.add_argument("--mu-c", type=float, help="central Fermi momentum (default 1.2)")
        p.add_argument("--x-inf", type=float, help="outer truncation in units of R_s (overrides --r-max)")
        p.add_argument("--r-max", type=float, help="outer truncation radius (default 200)")
        p.add_argument("--cells-inner", type=int, help="collocation cells inside the star (default 200)")
        p.add_argument("--cells-outer", type=int, help="collocation cells outside (default 400)")
        p.add_argument("--eps", type=float, help="residual tolerance in [1e-12, 1e-8] (default 1e-10)")
        p.add_argument("--max-iter", type=int, help="iteration limit (default 100)")
        p.add_argument("--farfield", choices=FARFIELD_MODES, help="nu condition at the truncation point")
        p.add_argument("--sweep-param", choices=SWEEP_PARAMS, help="swept parameter (default mu_c)")
        p.add_argument("--sweep-range", help="START,STOP of the swept parameter")
        p.add_argument("--sweep-count", type=int, help="number of sweep points (default 1)")
        p.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=None,
                       help="start each sweep point from the previous solution (default on)")
        p.add_argument("--verify", action=argparse.BooleanOptionalAction, default=None,
                       help="cross-check against the shooting solver")
        p.add_argument("--out-dir", help="output directory (default .)")
        p.add_argument("--emit", help="comma-separated subset of csv,json,svg (default csv,json)")
    return parser


def parse_config(argv=None):
    """Merge defaults, an optional config file and command-line flags.

    Returns
    -------
    (str, RunConfig)
        The subcommand and the validated configuration.

    Raises
    ------
    ConfigError
    """
    parser = build_parser()
    ns = parser.parse_args(argv)
    values = dict(_DEFAULTS)
    from_file = read_config_file(ns.config) if ns.config else {}
    values.update(from_file)
    for key, (dest, _) in _OPTIONS.items():
        flag_value = getattr(ns, key.replace("-", "_"))
        if flag_value is None:
            continue
        if dest in from_file and from_file[dest] != flag_value:
            logger.info("--%s=%r overrides config file value %r", key, flag_value, from_file[dest])
        _, values[dest] = _convert(key, flag_value, f"--{key}")
    return ns.command, _validate(ns.command, values)


def _validate(command, v):
    try:
        params = ModelParams(v["gamma"], v["Lambda"], v["b"], v["sigma_c"], v["mu_c"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        canm = CanmConfig(
            epsilon=v["epsilon"],
            max_iter=v["max_iter"],
            n_inner=v["n_inner"],
            n_outer=v["n_outer"],
            r_max=v["r_max"],
            x_inf=v["x_inf"],
            farfield=v["farfield"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    emit = frozenset(t.strip() for t in v["emit"].split(",") if t.strip())
    bad = emit - set(EMIT_CHOICES)
    if bad:
        raise ConfigError(f"--emit: unknown format(s) {sorted(bad)}; choose from {EMIT_CHOICES}")
    if v["sweep_param"] not in SWEEP_PARAMS:
        raise ConfigError(f"--sweep-param must be one of {SWEEP_PARAMS}")
    if v["sweep_count"] < 1:
        raise ConfigError("--sweep-count must be >= 1")
    current = getattr(params, v["sweep_param"])
    if v["sweep_range"] is None:
        start = stop = current
        if command == "sweep" and v["sweep_count"] > 1:
            raise ConfigError("--sweep-range is required for a sweep with more than one point")
    else:
        try:
            start, stop = (float(t) for t in v["sweep_range"].replace(":", ",").split(","))
        except ValueError:
            raise ConfigError(f"--sweep-range: expected START,STOP, got {v['sweep_range']!r}") from None
    for value in (start, stop):
        try:
            _with(params, v["sweep_param"], value)
        except ValueError as exc:
            raise ConfigError(f"--sweep-range: {exc}") from None
    sweep = SweepSpec(v["sweep_param"], start, stop, v["sweep_count"], bool(v["warm_start"]))
    return RunConfig(params, canm, sweep, Path(v["out_dir"]), emit, bool(v["verify"]))


def _with(params, name, value):
    d = asdict(params)
    d[name] = float(value)
    return ModelParams(**d)


# -- output ----------------------------------------------------------------
def _fmt(value):
    if value is None:
        return "nan"
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_profiles(solution, out_dir):
    paths = []
    for domain, names in (("inner", INNER_NAMES), ("outer", OUTER_NAMES)):
        table = solution.profile_table(domain)
        cols = ["x", "r", *names]
        path = Path(out_dir) / f"profiles_{domain}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(table[c] for c in cols)):
                w.writerow([_fmt(t) for t in row])
        paths.append(path)
    return paths


def read_profiles(path):
    """Inverse of :func:`write_profiles` for one file: ``{column: ndarray}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(t) for t in r] for r in body])
    return {name: data[:, k] for k, name in enumerate(header)}


def summary_dict(solution, converged=True):
    sp = solution.spectral
    obs = solution.observables
    rep = solution.report
    out = {
        "R_s": float(sp.R_s),
        "Omega": None if sp.Omega is None else float(sp.Omega),
        "phi_s": float(sp.phi_s),
        "M": None if obs is None else obs.M,
        "M_RB": None if obs is None else obs.M_RB,
        "M_RF": None if obs is None else obs.M_RF,
        "E_b": None if obs is None else obs.E_b,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "converged": bool(converged),
        "r_max": float(solution.r_max),
        "warnings": list(rep.warnings),
        "message": rep.message,
        "params": asdict(solution.params),
        "residual_history": [h["delta"] for h in rep.history],
        "tau_history": [h["tau"] for h in rep.history],
        "modes": [h["mode"] for h in rep.history],
    }
    return out


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def verify_against_oracle(solution):
    """Shooting cross-check of a converged solution."""
    from .oracle import OracleConvergenceError, ShootingError, shoot_solve

    try:
        ora = shoot_solve(solution.params, solution)
    except (OracleConvergenceError, ShootingError) as exc:
        return {"ok": False, "error": str(exc)}
    sp, so = solution.spectral, ora.spectral
    out = {
        "ok": True,
        "R_s": float(so.R_s),
        "Omega": None if so.Omega is None else float(so.Omega),
        "phi_s": float(so.phi_s),
        "delta_R_s_rel": abs(so.R_s - sp.R_s) / sp.R_s,
        "delta_Omega": None if sp.Omega is None else abs(so.Omega - sp.Omega),
        "delta_phi_s": abs(so.phi_s - sp.phi_s),
        "newton_iterations": ora.iterations,
    }
    return out


def _svg_setup():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt and no date stamp keep the SVG bytes reproducible
    plt.rcParams["svg.hashsalt"] = "bfstar"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def plot_profiles(solution, path):
    plt = _svg_setup()
    R = solution.spectral.R_s
    r_hi = min(solution.r_max, 30.0)
    r = np.linspace(0.0, r_hi, 600)
    x = r / R
    y = np.zeros((7, r.size))
    inside = x <= 1
    y[:, inside] = solution.inner.evaluate(x[inside])[0]
    y[:6, ~inside] = solution.outer.evaluate(x[~inside])[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, label in ((4, r"$\sigma$"), (2, r"$\varphi$"), (1, r"$\nu$"), (6, r"$\mu$")):
        ax.plot(r, y[k], label=label)
    ax.axvline(R, color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("r")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_sweep(rows, param, out_dir):
    plt = _svg_setup()
    ok = [r for r in rows if r["converged"]]
    if not ok:
        return []
    s = np.array([r[param] for r in ok])
    M = np.array([r["M"] for r in ok])
    MRF = np.array([r["M_RF"] for r in ok])
    Eb = np.array([r["E_b"] for r in ok])
    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, M, label="M")
    ax.plot(s, MRF, label=r"$M_{RF}$")
    ax.set_xlabel(param)
    ax.legend()
    fig.tight_layout()
    p = Path(out_dir) / "mass.svg"
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(MRF, Eb, marker=".")
    ax.set_xlabel(r"$M_{RF}$")
    ax.set_ylabel(r"$E_b$")
    fig.tight_layout()
    p = Path(out_dir) / "binding.svg"
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    return paths


# -- drivers ---------------------------------------------------------------
def run_single(cfg, params=None, guess=None):
    """Solve one configuration and emit the requested files.

    Returns
    -------
    (Solution or None, int)
        The solution (partial on non-convergence) and the exit code.
    """
    params = params or cfg.params
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve(params, cfg.canm, guess)
        converged, code = True, EXIT_OK
    except ConvergenceError as exc:
        logger.error("no convergence: %s", exc)
        sol, converged, code = exc.state, False, EXIT_NONCONVERGED
    if sol is None:
        return None, code
    summary = summary_dict(sol, converged)
    if cfg.verify and converged:
        summary["oracle"] = verify_against_oracle(sol)
    if "csv" in cfg.emit:
        write_profiles(sol, out)
    if "json" in cfg.emit or not converged:
        _write_json(summary, out / "summary.json")
    if "svg" in cfg.emit:
        plot_profiles(sol, out / "profiles.svg")
    return sol, code


SWEEP_COLUMNS = ("R_s", "Omega", "phi_s", "M", "M_RB", "M_RF", "E_b", "converged", "iterations")


def _sweep_point(params_at, value, prev_value, guess, canm):
    """Solve at ``value``; on failure approach it from ``prev_value`` by halving the step."""
    try:
        return solve(params_at(value), canm, guess), 0
    except ConvergenceError as exc:
        last = exc
    if guess is None or prev_value is None:
        raise last
    for halvings in range(1, MAX_HALVINGS + 1):
        n = 2 ** halvings
        g = guess
        try:
            for j in range(1, n + 1):
                g = solve(params_at(prev_value + (value - prev_value) * j / n), canm, g)
            return g, halvings
        except ConvergenceError as exc:
            last = exc
    raise last


def run_sweep(cfg):
    """Iterate the swept parameter; non-converged points are recorded and skipped.

    Returns
    -------
    (list of dict, int)
        One row per sweep point and the exit code.
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sp = cfg.sweep
    rows = []
    guess, prev_value = None, None
    failures = 0

    def params_at(value):
        return _with(cfg.params, sp.param, value)

    for value in sp.values():
        row = {sp.param: float(value)}
        try:
            sol, halvings = _sweep_point(params_at, value, prev_value, guess if sp.warm_start else None, cfg.canm)
        except ConvergenceError as exc:
            failures += 1
            logger.warning("%s=%.6g did not converge: %s", sp.param, value, exc)
            row.update({k: None for k in SWEEP_COLUMNS})
            row["converged"] = False
            row["iterations"] = exc.report.iterations if exc.report else 0
            rows.append(row)
            continue
        obs = sol.observables
        row.update(
            R_s=float(sol.spectral.R_s),
            Omega=None if sol.spectral.Omega is None else float(sol.spectral.Omega),
            phi_s=float(sol.spectral.phi_s),
            M=obs.M,
            M_RB=obs.M_RB,
            M_RF=obs.M_RF,
            E_b=obs.E_b,
            converged=True,
            iterations=sol.report.iterations,
        )
        if halvings:
            logger.info("%s=%.6g reached after %d step halvings", sp.param, value, halvings)
        if cfg.verify:
            ora = verify_against_oracle(sol)
            row["oracle_delta_R_s_rel"] = ora.get("delta_R_s_rel")
            row["oracle_delta_Omega"] = ora.get("delta_Omega")
        rows.append(row)
        guess, prev_value = sol, value

    cols = [sp.param, *SWEEP_COLUMNS]
    if cfg.verify:
        cols += ["oracle_delta_R_s_rel", "oracle_delta_Omega"]
    if "csv" in cfg.emit:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([_fmt(row.get(c)) for c in cols])
    if "json" in cfg.emit:
        _write_json({"param": sp.param, "rows": rows}, out / "sweep.json")
    if "svg" in cfg.emit:
        plot_sweep(rows, sp.param, out)
    return rows, (EXIT_NONCONVERGED if failures else EXIT_OK)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        command, cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        # argparse reports bad flags with exit status 2; map to the configuration code
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if command == "solve":
            _, code = run_single(cfg)
        else:
            _, code = run_sweep(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
