"""Damped-Newton homotopy continuation for the deformed quotient equation.

The path follows the explicit one-parameter family: coefficient weights
(1-t) c + t alpha_l and background blend -t B + (1-t) g0, anchored at the
exactly known root u = 0 at t = 0.  Each t-step solves F(u; t) = 0 with a
damped Newton iteration whose linear systems are matrix-free restarted
GMRES with diagonal preconditioning; damping keeps every iterate strictly
inside Gamma_{k-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import cones, operator
from .geometry import HypothesisViolation, assemble_U, validate_hypotheses
from .grid import compute_jet, sup_norm

__all__ = [
    "SolverConfig",
    "NewtonFailure",
    "ContinuationStall",
    "NewtonResult",
    "StepRecord",
    "ContinuationState",
    "residual",
    "linearize_apply",
    "newton_solve_at_t",
    "continuation_run",
    "manufacture_alpha",
    "ManufacturedProblem",
    "manufactured_problem",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and safeguards for one continuation run."""

    k: int
    tau: float = 0.0
    residual_tol: float = 1e-9
    max_newton: int = 30
    dt_init: float = 0.1
    dt_min: float = 1e-4
    damping_shrink: float = 0.5
    cone_margin: float = 1e-10
    linear_rtol: float = 1e-10
    linear_maxiter: int = 400

    def __post_init__(self):
        if not self.tau < 1.0:
            raise HypothesisViolation(
                f"hypothesis violated: tau < 1 required, got tau={self.tau}"
            )
        for name in ("residual_tol", "cone_margin", "linear_rtol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.dt_min < self.dt_init <= 1.0:
            raise ValueError("need 0 < dt_min < dt_init <= 1")
        if not 0.0 < self.damping_shrink < 1.0:
            raise ValueError("damping_shrink must sit in (0, 1)")
        if self.max_newton < 1 or self.linear_maxiter < 1:
            raise ValueError("iteration limits must be >= 1")


class NewtonFailure(RuntimeError):
    """Newton did not reach tolerance: limit, damping underflow, or a stuck
    linear solve.  Carries the final residual sup-norm."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


class ContinuationStall(RuntimeError):
    """Step halving hit dt_min; the last accepted state is attached."""

    def __init__(self, message, state=None, reports=None):
        super().__init__(message)
        self.state = state
        self.reports = reports or []


@dataclass(frozen=True)
class NewtonResult:
    u: np.ndarray
    iterations: int
    residual_norm: float
    history: tuple  # residual sup-norms, one per iterate including the start
    state: operator.PointState


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    accepted: bool
    newton_iters: int
    residual_norm: float
    note: str = ""


@dataclass
class ContinuationState:
    t: float
    u: np.ndarray
    residual_norm: float
    newton_iters: int
    step_log: list = field(default_factory=list)


def _check_coherent(background, coeff, config):
    if config.k != coeff.k:
        raise ValueError(f"config k={config.k} disagrees with coefficient k={coeff.k}")
    if config.tau != background.tau:
        raise ValueError(
            f"config tau={config.tau} disagrees with background tau={background.tau}"
        )


def residual(u, t, background, coeff, config):
    """F(u; t) per node; hard error if any node leaves Gamma_{k-1} + margin."""
    state = operator.evaluate(u, t, background, coeff)
    if not state.margin.min() > config.cone_margin:
        raise operator.admissibility_failure(state, config.cone_margin, f"residual at t={t}")
    return state.residual


def _delta_U_action(state, background, v_jet, v):
    """Directional derivative of the frame matrix U^t along v (exact)."""
    grid = background.grid
    n = grid.dim
    tau = background.tau
    eye = np.eye(n)
    g = state.jet.gradient
    dv = v_jet.gradient
    if background.phi is None:
        hv = v_jet.hessian
        lapv = v_jet.laplacian
        scale = None
    else:
        pg = background.phi_jet.gradient
        mixed = pg[..., :, None] * dv[..., None, :]
        inner = np.einsum("...i,...i->...", pg, dv)
        hv = v_jet.hessian - mixed - mixed.swapaxes(-1, -2) + inner[..., None, None] * eye
        lapv = np.trace(hv, axis1=-2, axis2=-1)
        scale = background.frame_scale()
    pair = np.einsum("...i,...i->...", g, dv)
    cross = g[..., :, None] * dv[..., None, :]
    dU = (
        hv
        + ((1.0 - tau) / (n - 2.0)) * lapv[..., None, None] * eye
        + (2.0 - tau) * pair[..., None, None] * eye
        - cross
        - cross.swapaxes(-1, -2)
    )
    if scale is not None:
        dU = scale[..., None, None] * dU
    return dU


def _linear_action(state, background, v):
    """Frechet derivative of F at `state`, applied to v."""
    v_jet = compute_jet(background.grid, v)
    dU = _delta_U_action(state, background, v_jet, v)
    first = np.einsum("...ij,...ij->...", state.grad, dU)
    return first + state.zeroth * v


def _preconditioner_diagonal(state, background):
    """Stencil-center coefficient of the linearization plus its zeroth order.

    Only the Hessian diagonal (-2/h^2 per axis) and the Laplacian trace term
    touch the center node; first-derivative stencils have zero center weight.
    """
    grid = background.grid
    n = grid.dim
    h = grid.spacing
    tau = background.tau
    trace_g = np.trace(state.grad, axis1=-2, axis2=-1)
    c1 = (1.0 - tau) / (n - 2.0)
    diag = (-2.0 / (h * h)) * trace_g * (1.0 + n * c1)
    if background.phi is not None:
        diag = diag * background.frame_scale()
    diag = diag + state.zeroth
    safe = np.where(np.abs(diag) < 1e-12, 1.0, diag)
    return safe


def linearize_apply(u, t, v, background, coeff, config=None):
    """Matrix-free action of dF/du at (u, t) on the field v."""
    state = operator.evaluate(u, t, background, coeff, want_grad=True)
    floor = config.cone_margin if config is not None else 0.0
    if not state.margin.min() > floor:
        raise operator.admissibility_failure(state, floor, f"linearization at t={t}")
    return _linear_action(state, background, v)


def _solve_linear(state, background, config):
    shape = state.u.shape
    nflat = state.u.size

    def matvec(x):
        return _linear_action(state, background, x.reshape(shape)).ravel()

    A = LinearOperator((nflat, nflat), matvec=matvec, dtype=np.float64)
    diag = _preconditioner_diagonal(state, background).ravel()
    M = LinearOperator((nflat, nflat), matvec=lambda x: x / diag, dtype=np.float64)
    b = -state.residual.ravel()
    restart = min(50, nflat)
    cycles = max(1, math.ceil(config.linear_maxiter / restart))
    x, info = gmres(A, b, rtol=config.linear_rtol, atol=0.0, restart=restart, maxiter=cycles, M=M)
    if info != 0:
        raise NewtonFailure(
            f"linear solver stagnated (info={info}) at t={state.t}",
            residual=sup_norm(state.residual),
        )
    return x.reshape(shape)


def newton_solve_at_t(u0, t, background, coeff, config):
    """Damped Newton at fixed t; returns a NewtonResult or raises NewtonFailure.

    Damping halves the step until the trial iterate keeps every node inside
    Gamma_{k-1} with the configured margin and strictly decreases the
    residual sup-norm.  An inadmissible starting iterate is a hard error.
    """
    u = np.array(u0, dtype=np.float64, copy=True)
    state = operator.evaluate(u, t, background, coeff, want_grad=True)
    if not state.margin.min() > config.cone_margin:
        raise operator.admissibility_failure(state, config.cone_margin, f"initial guess at t={t}")
    rnorm = sup_norm(state.residual)
    history = [rnorm]
    iters = 0
    while rnorm > config.residual_tol:
        if iters >= config.max_newton:
            raise NewtonFailure(
                f"Newton iteration limit {config.max_newton} at t={t} (residual {rnorm:.3e})",
                residual=rnorm,
                history=history,
            )
        delta = _solve_linear(state, background, config)
        s = 1.0
        while True:
            trial_u = u + s * delta
            # overshooting trials may overflow exp or leave the cone; NaNs
            # compare False below and the step is simply rejected
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                trial = operator.evaluate(trial_u, t, background, coeff, want_grad=True)
                ok = bool(
                    trial.margin.min() > config.cone_margin
                    and np.isfinite(trial.residual).all()
                    and sup_norm(trial.residual) < rnorm
                )
            if ok:
                break
            s *= config.damping_shrink
            if s < 1e-8:
                raise NewtonFailure(
                    f"damping underflow at t={t} (residual {rnorm:.3e})",
                    residual=rnorm,
                    history=history,
                )
        u, state = trial_u, trial
        rnorm = sup_norm(state.residual)
        history.append(rnorm)
        iters += 1
    return NewtonResult(u=u, iterations=iters, residual_norm=rnorm, history=tuple(history), state=state)


def continuation_run(background, coeff, config):
    """March t from 0 to 1 with adaptive steps; returns (state, reports).

    Hypotheses are validated before any step.  dt halves on a failed step and
    doubles back toward dt_init after two consecutive successes; when dt
    falls below dt_min a ContinuationStall carrying the last accepted state
    is raised.  One MonitorReport is emitted per accepted step, including the
    t = 0 anchor.
    """
    from . import monitors

    _check_coherent(background, coeff, config)
    validate_hypotheses(background, coeff)
    grid = background.grid
    log = []
    reports = []

    res = newton_solve_at_t(grid.zeros(), 0.0, background, coeff, config)
    u = res.u
    total_iters = res.iterations
    log.append(StepRecord(0.0, 0.0, True, res.iterations, res.residual_norm))
    reports.append(monitors.snapshot_point(res.state, background, coeff, res.iterations))

    t = 0.0
    dt = config.dt_init
    successes = 0
    last_rnorm = res.residual_norm
    while t < 1.0:
        t_try = t + dt
        if t_try >= 1.0 - 1e-12:  # snap: accumulated 0.1-steps land at 1 - ulp
            t_try = 1.0
        try:
            res = newton_solve_at_t(u, t_try, background, coeff, config)
        except (NewtonFailure, cones.InadmissibleStateError) as exc:
            log.append(StepRecord(t_try, dt, False, 0, math.nan, note=str(exc)))
            dt *= 0.5
            successes = 0
            if dt < config.dt_min:
                state = ContinuationState(
                    t=t, u=u, residual_norm=last_rnorm, newton_iters=total_iters, step_log=log
                )
                raise ContinuationStall(
                    f"continuation stalled at t={t}: step below dt_min={config.dt_min} ({exc})",
                    state=state,
                    reports=reports,
                ) from exc
            continue
        t = t_try
        u = res.u
        last_rnorm = res.residual_norm
        total_iters += res.iterations
        log.append(StepRecord(t, dt, True, res.iterations, res.residual_norm))
        reports.append(monitors.snapshot_point(res.state, background, coeff, res.iterations))
        successes += 1
        if successes >= 2 and dt < config.dt_init:
            dt = min(config.dt_init, 2.0 * dt)
            successes = 0
    state = ContinuationState(
        t=1.0, u=u, residual_norm=last_rnorm, newton_iters=total_iters, step_log=log
    )
    return state, reports


def _stack_alpha_l(alpha_l, grid, k):
    """Normalize scalars / lists of scalars-or-fields to shape (k-1, *shape)."""
    if np.isscalar(alpha_l):
        return np.full((k - 1,) + grid.shape, float(alpha_l))
    parts = []
    for entry in alpha_l:
        if np.isscalar(entry):
            parts.append(np.full(grid.shape, float(entry)))
        else:
            parts.append(np.asarray(entry, dtype=np.float64))
    out = np.stack(parts)
    if out.shape != (k - 1,) + grid.shape:
        raise ValueError(f"alpha_l must provide k-1={k - 1} fields, got {out.shape}")
    return out


def manufacture_alpha(u_star, alpha_l, background, k, *, jet=None):
    """Back-solve the t=1 equation for alpha so u_star is its exact root.

        alpha = -e^{-2 u*} [sigma_k/sigma_{k-1}(U*) - sum_l alpha_l e^{2(k-l)u*}
                            sigma_l/sigma_{k-1}(U*)]

    alpha carries no sign constraint.  Pass the analytic `jet` of u_star to
    manufacture against exact derivatives (convergence studies); otherwise
    the stencil jet is used and the construction residual is identically
    zero at this resolution.  Rejects u_star whose U* leaves Gamma_{k-1}.
    """
    from .geometry import CoefficientData

    grid = background.grid
    u = np.asarray(u_star, dtype=np.float64)
    if jet is None:
        jet = compute_jet(grid, u)
    al = _stack_alpha_l(alpha_l, grid, k)
    U = assemble_U(jet, background, 1.0)
    ls = np.arange(k - 1)
    beta1 = np.moveaxis(al, 0, -1) * np.exp(2.0 * (k - ls) * u[..., None])
    ev = cones.quotient_eval(U, k, beta1, check=False)
    marg = ev.sigma[..., 1:k].min(axis=-1)
    low = marg.min()
    if not low > 0.0:
        node = np.unravel_index(int(np.argmin(marg)), marg.shape)
        node = tuple(int(i) for i in node)
        eigs = np.linalg.eigvalsh(U[node])
        raise cones.InadmissibleStateError(
            f"u_star rejected: U(u_star) leaves Gamma_{k - 1} at node {node} "
            f"(margin {low:.3e}, eigenvalues {eigs.tolist()})",
            sigma=ev.sigma[node],
            node=node,
        )
    alpha = -np.exp(-2.0 * u) * ev.value
    return CoefficientData(grid=grid, k=k, alpha=alpha, alpha_l=al)


@dataclass(frozen=True)
class ManufacturedProblem:
    """A chosen exact solution and the coefficient data built around it."""

    u_star: np.ndarray
    jet: object
    background: object
    coeff: object


def manufactured_problem(u_star_expr, alpha_l, background, k):
    """Build a ManufacturedProblem from a field expression, using its
    analytic jet for the construction."""
    from .fieldexpr import analytic_jet

    jet = analytic_jet(u_star_expr, background.grid)
    coeff = manufacture_alpha(jet.value, alpha_l, background, k, jet=jet)
    return ManufacturedProblem(u_star=jet.value, jet=jet, background=background, coeff=coeff)
