"""Declarative run configuration: INI sections -> problem objects.

Grammar (all keys optional unless noted):

    [problem]
    n = 3                 # required, ambient dimension, 3..5
    k = 3                 # required, cone index, 3 <= k <= n
    tau = 0.0
    resolution = 16       # nodes per axis, even, >= 8
    background = hyperbolic-like
        # hyperbolic-like        constant tensor B = -g0
        # spaceform:<kappa>      constant-curvature tensor (kappa < 0 usable)
        # conformal:<expr>       flat metric scaled by e^{2 phi}, phi = <expr>
        # file:<prefix>          per-node tensor from <prefix>_B<i><j>.ksig
    alpha = 0.2*sin(x1)   # expression or file:<path>
    alpha_l = 1.0         # one entry broadcast to all l, or k-1 comma-separated
    u_star = 0.1*sin(x1)*cos(x2)   # manufacture only

    [solver]              # keys mirror SolverConfig fields
    residual_tol = 1e-9
    ...

    [output]
    directory = runs/out  # overridden by $KSIG_OUTDIR when set
    csv = true
    json = true
    svg = true
    seed = 42

Field expressions are sums of terms `coeff * factor * ...` where each factor
is sin(xJ) or cos(xJ); that closed set covers every built-in problem.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fieldexpr, geometry
from .grid import PeriodicGrid, read_field
from .solver import SolverConfig

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "OutputConfig",
    "RunConfig",
    "load_config",
    "build_problem",
    "field_from_spec",
    "background_from_spec",
    "resolve_output_dir",
]


class ConfigError(ValueError):
    """Malformed or incomplete run configuration."""


_PROBLEM_KEYS = {"n", "k", "tau", "resolution", "background", "alpha", "alpha_l", "u_star"}
_SOLVER_KEYS = {
    "residual_tol",
    "max_newton",
    "dt_init",
    "dt_min",
    "damping_shrink",
    "cone_margin",
    "linear_rtol",
    "linear_maxiter",
}
_OUTPUT_KEYS = {"directory", "csv", "json", "svg", "seed"}


@dataclass(frozen=True)
class ProblemConfig:
    n: int
    k: int
    tau: float
    resolution: int
    background: str
    alpha: str
    alpha_l: str
    u_star: str | None


@dataclass(frozen=True)
class OutputConfig:
    directory: str
    csv: bool
    json: bool
    svg: bool
    seed: int


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    solver: SolverConfig
    output: OutputConfig

    def echo(self):
        """Plain dict of every setting; sufficient to reproduce the run."""
        return {
            "problem": {
                "n": self.problem.n,
                "k": self.problem.k,
                "tau": self.problem.tau,
                "resolution": self.problem.resolution,
                "background": self.problem.background,
                "alpha": self.problem.alpha,
                "alpha_l": self.problem.alpha_l,
                "u_star": self.problem.u_star,
            },
            "solver": {
                "residual_tol": self.solver.residual_tol,
                "max_newton": self.solver.max_newton,
                "dt_init": self.solver.dt_init,
                "dt_min": self.solver.dt_min,
                "damping_shrink": self.solver.damping_shrink,
                "cone_margin": self.solver.cone_margin,
                "linear_rtol": self.solver.linear_rtol,
                "linear_maxiter": self.solver.linear_maxiter,
            },
            "output": {
                "directory": self.output.directory,
                "csv": self.output.csv,
                "json": self.output.json,
                "svg": self.output.svg,
                "seed": self.output.seed,
            },
        }


def _check_keys(parser, section, allowed):
    if not parser.has_section(section):
        return
    unknown = set(parser.options(section)) - allowed
    if unknown:
        raise ConfigError(f"unknown [{section}] keys: {sorted(unknown)}")


def _get(parser, section, key, cast, default):
    if parser.has_section(section) and parser.has_option(section, key):
        raw = parser.get(section, key)
        try:
            if cast is bool:
                return parser.getboolean(section, key)
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return default


def load_config(path):
    """Parse an INI run configuration; unknown sections or keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    extra = set(parser.sections()) - {"problem", "solver", "output"}
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    _check_keys(parser, "problem", _PROBLEM_KEYS)
    _check_keys(parser, "solver", _SOLVER_KEYS)
    _check_keys(parser, "output", _OUTPUT_KEYS)

    if not parser.has_section("problem"):
        raise ConfigError("missing [problem] section")
    for key in ("n", "k"):
        if not parser.has_option("problem", key):
            raise ConfigError(f"[problem] {key} is required")

    problem = ProblemConfig(
        n=_get(parser, "problem", "n", int, None),
        k=_get(parser, "problem", "k", int, None),
        tau=_get(parser, "problem", "tau", float, 0.0),
        resolution=_get(parser, "problem", "resolution", int, 16),
        background=_get(parser, "problem", "background", str, "hyperbolic-like").strip(),
        alpha=_get(parser, "problem", "alpha", str, "0").strip(),
        alpha_l=_get(parser, "problem", "alpha_l", str, "1").strip(),
        u_star=_get(parser, "problem", "u_star", str, None),
    )
    solver_cfg = SolverConfig(
        k=problem.k,
        tau=problem.tau,
        residual_tol=_get(parser, "solver", "residual_tol", float, 1e-9),
        max_newton=_get(parser, "solver", "max_newton", int, 30),
        dt_init=_get(parser, "solver", "dt_init", float, 0.1),
        dt_min=_get(parser, "solver", "dt_min", float, 1e-4),
        damping_shrink=_get(parser, "solver", "damping_shrink", float, 0.5),
        cone_margin=_get(parser, "solver", "cone_margin", float, 1e-10),
        linear_rtol=_get(parser, "solver", "linear_rtol", float, 1e-10),
        linear_maxiter=_get(parser, "solver", "linear_maxiter", int, 400),
    )
    output = OutputConfig(
        directory=_get(parser, "output", "directory", str, "ksig-out"),
        csv=_get(parser, "output", "csv", bool, True),
        json=_get(parser, "output", "json", bool, True),
        svg=_get(parser, "output", "svg", bool, True),
        seed=_get(parser, "output", "seed", int, 42),
    )
    return RunConfig(problem=problem, solver=solver_cfg, output=output)


def field_from_spec(spec, grid, base=None):
    """Evaluate `file:<path>` or a field expression on the grid."""
    spec = spec.strip()
    if spec.startswith("file:"):
        path = Path(spec[len("file:"):].strip())
        if base is not None and not path.is_absolute():
            path = Path(base) / path
        _, values = read_field(path, grid)
        return values
    expr = fieldexpr.parse_field_expr(spec)
    if expr.max_axis() >= grid.dim:
        raise ConfigError(
            f"expression {spec!r} uses x{expr.max_axis() + 1} but the grid has "
            f"dimension {grid.dim}"
        )
    return fieldexpr.evaluate(expr, grid) + np.zeros(grid.shape)


def background_from_spec(spec, grid, tau, base=None):
    spec = spec.strip()
    if spec == "hyperbolic-like":
        return geometry.flat_background(grid, tau=tau)
    if spec.startswith("spaceform:"):
        try:
            kappa = float(spec[len("spaceform:"):])
        except ValueError as exc:
            raise ConfigError(f"bad spaceform curvature in {spec!r}") from exc
        B = geometry.spaceform_schouten(kappa, grid.dim, tau)
        return geometry.flat_background(grid, tau=tau, B=B)
    if spec.startswith("conformal:"):
        phi = field_from_spec(spec[len("conformal:"):], grid, base=base)
        return geometry.background_from_phi(grid, phi, tau=tau)
    if spec.startswith("file:"):
        prefix = spec[len("file:"):].strip()
        pre = Path(prefix)
        if base is not None and not pre.is_absolute():
            pre = Path(base) / pre
        n = grid.dim
        B = np.zeros(grid.shape + (n, n))
        for i in range(n):
            for j in range(i, n):
                _, comp = read_field(Path(f"{pre}_B{i}{j}.ksig"), grid)
                B[..., i, j] = comp
                B[..., j, i] = comp
        return geometry.flat_background(grid, tau=tau, B=B)
    raise ConfigError(f"unknown background spec: {spec!r}")


def _split_alpha_l(spec, k):
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if len(parts) == 1:
        return parts * (k - 1)
    if len(parts) != k - 1:
        raise ConfigError(f"alpha_l needs 1 or k-1={k - 1} entries, got {len(parts)}")
    return parts


def build_problem(cfg, base=None):
    """Instantiate (grid, background, coeff) from a RunConfig.

    `base` resolves relative file: paths (defaults to the working directory).
    """
    p = cfg.problem
    grid = PeriodicGrid(dim=p.n, resolution=p.resolution)
    background = background_from_spec(p.background, grid, p.tau, base=base)
    alpha = field_from_spec(p.alpha, grid, base=base)
    parts = _split_alpha_l(p.alpha_l, p.k)
    alpha_l = np.stack([field_from_spec(s, grid, base=base) for s in parts])
    coeff = geometry.CoefficientData(grid=grid, k=p.k, alpha=alpha, alpha_l=alpha_l)
    return grid, background, coeff


def resolve_output_dir(cfg):
    """Output directory, honoring the KSIG_OUTDIR override."""
    override = os.environ.get("KSIG_OUTDIR")
    return Path(override) if override else Path(cfg.output.directory)
