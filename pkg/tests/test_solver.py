"""Solver checks: exact anchors, the linearization against difference
quotients of the residual, Newton/damping behavior, adaptive continuation,
and manufactured problems."""

import numpy as np
import pytest

from ksig import cones, geometry, solver
from ksig.grid import PeriodicGrid, l2_norm, sup_norm


def make_grid(n=3, N=8):
    return PeriodicGrid(dim=n, resolution=N)


def trivial_coeff(grid, k):
    """alpha = 0, alpha_l = c: the homotopy is stationary at u = 0."""
    c = cones.homotopy_constant(grid.dim, k)
    return geometry.CoefficientData(
        grid=grid, k=k, alpha=np.zeros(grid.shape), alpha_l=np.full((k - 1,) + grid.shape, c)
    )


def default_coeff(grid, k=3, amplitude=0.2):
    x1 = grid.coordinate(0) + np.zeros(grid.shape)
    return geometry.CoefficientData(
        grid=grid,
        k=k,
        alpha=amplitude * np.sin(x1),
        alpha_l=np.ones((k - 1,) + grid.shape),
    )


def smooth_u(grid, amp=0.05):
    x1 = grid.coordinate(0) + np.zeros(grid.shape)
    x2 = grid.coordinate(1) + np.zeros(grid.shape)
    return amp * np.sin(x1) * np.cos(x2)


# ---------------------------------------------------------------------------
# config validation


def test_config_rejects_tau_one():
    with pytest.raises(geometry.HypothesisViolation, match="tau"):
        solver.SolverConfig(k=3, tau=1.0)


def test_config_rejects_bad_step_bounds():
    with pytest.raises(ValueError):
        solver.SolverConfig(k=3, dt_init=0.1, dt_min=0.1)
    with pytest.raises(ValueError):
        solver.SolverConfig(k=3, dt_init=1.5)
    with pytest.raises(ValueError):
        solver.SolverConfig(k=3, residual_tol=0.0)
    with pytest.raises(ValueError):
        solver.SolverConfig(k=3, damping_shrink=1.0)


def test_continuation_checks_config_coherence():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    with pytest.raises(ValueError, match="k="):
        solver.continuation_run(bg, coeff, solver.SolverConfig(k=4, tau=0.0))
    with pytest.raises(ValueError, match="tau"):
        solver.continuation_run(bg, coeff, solver.SolverConfig(k=3, tau=0.5))


# ---------------------------------------------------------------------------
# residual anchors


@pytest.mark.parametrize("n,k", [(3, 3), (4, 3), (4, 4), (5, 3), (5, 4), (5, 5)])
def test_anchor_residual_zero(n, k):
    # at t=0 the background drops out, U = identity, and the homotopy
    # constant is defined so sigma_k(e) = c * sum sigma_l(e) exactly
    grid = make_grid(n, 8 if n < 5 else 8)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, k)
    cfg = solver.SolverConfig(k=k, tau=0.0)
    r = solver.residual(grid.zeros(), 0.0, bg, coeff, cfg)
    assert sup_norm(r) <= 1e-12


def test_anchor_independent_of_background():
    grid = make_grid()
    rot = np.array([[0.8, 0.6, 0.0], [-0.6, 0.8, 0.0], [0.0, 0.0, 1.0]])
    B = rot @ np.diag([-1.3, -0.9, -0.7]) @ rot.T
    bg = geometry.flat_background(grid, tau=0.2, B=B)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.2)
    assert sup_norm(solver.residual(grid.zeros(), 0.0, bg, coeff, cfg)) <= 1e-12


def test_anchor_t1_with_matching_coefficients():
    # u = 0, t = 1, B = -g0, alpha_l = c, alpha = 0: same cancellation at t=1
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    assert sup_norm(solver.residual(grid.zeros(), 1.0, bg, coeff, cfg)) <= 1e-12


def test_residual_rejects_inadmissible_state():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    x1 = grid.coordinate(0) + np.zeros(grid.shape)
    with pytest.raises(cones.InadmissibleStateError, match="node"):
        solver.residual(5.0 * np.sin(x1), 0.0, bg, coeff, cfg)


# ---------------------------------------------------------------------------
# linearization


def test_linearize_constant_direction_exact_value():
    # at (u,t)=(0,0), n=k=3: second-order terms vanish for constant v and the
    # zeroth order is -c * sum_l 2(k-l) sigma_l(e)/sigma_2(e)
    #   = -(1/4) * (2*3*(1/3) + 2*2*(3/3)) = -(1/4)*(2 + 4) = -3/2
    for N in (8, 16):
        grid = make_grid(3, N)
        bg = geometry.flat_background(grid, tau=0.0)
        coeff = trivial_coeff(grid, 3)
        cfg = solver.SolverConfig(k=3, tau=0.0)
        out = solver.linearize_apply(grid.zeros(), 0.0, np.ones(grid.shape), bg, coeff, cfg)
        assert np.abs(out + 1.5).max() <= 1e-12


def test_linearize_zero_direction():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    out = solver.linearize_apply(smooth_u(grid), 0.5, np.zeros(grid.shape), bg, coeff, cfg)
    assert np.array_equal(out, np.zeros(grid.shape))


def test_linearize_is_linear_in_direction():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    rng = np.random.default_rng(11)
    u = smooth_u(grid)
    v = rng.standard_normal(grid.shape)
    w = rng.standard_normal(grid.shape)
    lv = solver.linearize_apply(u, 0.7, v, bg, coeff, cfg)
    lw = solver.linearize_apply(u, 0.7, w, bg, coeff, cfg)
    combo = solver.linearize_apply(u, 0.7, 2.0 * v - 3.0 * w, bg, coeff, cfg)
    assert np.abs(combo - (2.0 * lv - 3.0 * lw)).max() <= 1e-10 * max(1.0, np.abs(combo).max())


def test_linearize_matches_difference_quotient():
    grid = make_grid(3, 8)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    rng = np.random.default_rng(5)
    eps = 1e-6
    for trial in range(6):
        u = smooth_u(grid, amp=rng.uniform(0.01, 0.08))
        v = rng.standard_normal(grid.shape)
        t = rng.uniform(0.0, 1.0)
        lin = solver.linearize_apply(u, t, v, bg, coeff, cfg)
        fd = (
            solver.residual(u + eps * v, t, bg, coeff, cfg)
            - solver.residual(u - eps * v, t, bg, coeff, cfg)
        ) / (2.0 * eps)
        rel = l2_norm(grid, lin - fd) / max(1.0, l2_norm(grid, fd))
        assert rel <= 1e-5, f"trial {trial}: rel {rel:.3e}"


def test_linearize_matches_difference_quotient_conformal_background():
    # exercises the scaled-frame branch of the derivative of U
    grid = make_grid(3, 8)
    phi = 0.1 * np.cos(grid.coordinate(0) + np.zeros(grid.shape))
    bg = geometry.background_from_phi(grid, phi, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    rng = np.random.default_rng(6)
    u = smooth_u(grid, amp=0.03)
    v = rng.standard_normal(grid.shape)
    eps = 1e-6
    # t = 0 keeps U well inside the cone regardless of the (inadmissible
    # on a torus) conformal background tensor
    lin = solver.linearize_apply(u, 0.0, v, bg, coeff, cfg)
    fd = (
        solver.residual(u + eps * v, 0.0, bg, coeff, cfg)
        - solver.residual(u - eps * v, 0.0, bg, coeff, cfg)
    ) / (2.0 * eps)
    rel = l2_norm(grid, lin - fd) / max(1.0, l2_norm(grid, fd))
    assert rel <= 1e-5


# ---------------------------------------------------------------------------
# Newton at fixed t


def test_newton_at_anchor_zero_iterations():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    res = solver.newton_solve_at_t(grid.zeros(), 0.0, bg, coeff, cfg)
    assert res.iterations == 0
    assert res.residual_norm <= 1e-12


def test_newton_returns_to_zero():
    # the t=0 problem has u=0 as its only root; Newton must find its way back
    grid = make_grid(3, 16)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    u0 = 0.01 * np.sin(grid.coordinate(0) + np.zeros(grid.shape))
    res = solver.newton_solve_at_t(u0, 0.0, bg, coeff, cfg)
    assert sup_norm(res.u) <= 1e-8
    assert res.iterations <= 6


def test_newton_quadratic_tail():
    grid = make_grid(3, 16)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    u0 = 0.01 * np.sin(grid.coordinate(0) + np.zeros(grid.shape))
    res = solver.newton_solve_at_t(u0, 0.0, bg, coeff, cfg)
    rs = res.history
    assert len(rs) >= 3
    # observed contraction constants sit near 1.1; 50 leaves slack for
    # rounding in the final, nearly-converged step
    for j in (len(rs) - 3, len(rs) - 2):
        assert rs[j + 1] <= 50.0 * rs[j] ** 2, f"step {j}: {rs[j + 1]:.3e} vs {rs[j]:.3e}"


def test_newton_rejects_inadmissible_start():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    x1 = grid.coordinate(0) + np.zeros(grid.shape)
    with pytest.raises(cones.InadmissibleStateError, match="initial guess"):
        solver.newton_solve_at_t(5.0 * np.sin(x1), 0.0, bg, coeff, cfg)


def test_newton_iteration_limit_reported():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0, max_newton=1)
    with pytest.raises(solver.NewtonFailure, match="limit") as err:
        solver.newton_solve_at_t(grid.zeros(), 0.6, bg, coeff, cfg)
    assert err.value.residual is not None and err.value.residual > 0


# ---------------------------------------------------------------------------
# continuation


def test_continuation_stationary_path_stays_at_zero():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    state, reports = solver.continuation_run(bg, coeff, cfg)
    assert state.t == 1.0
    assert np.array_equal(state.u, np.zeros(grid.shape))
    assert state.newton_iters == 0
    assert all(r.sup_u == 0.0 for r in reports)


def test_continuation_default_problem():
    grid = make_grid(3, 8)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    state, reports = solver.continuation_run(bg, coeff, cfg)
    assert state.t == 1.0
    assert state.residual_norm <= 1e-9
    assert sup_norm(state.u) > 0.1  # honest deformation, not a no-op
    accepted = [rec for rec in state.step_log if rec.accepted]
    assert len(reports) == len(accepted)
    assert accepted[0].t == 0.0 and accepted[-1].t == 1.0
    ts = [rec.t for rec in accepted]
    assert np.allclose(ts, np.arange(len(ts)) / (len(ts) - 1))
    for rep in reports:
        assert rep.cone_margin > 1e-10
        assert rep.min_eig_Gij > 0.0
        assert rep.eq33_slack >= -1e-8


def test_continuation_validates_hypotheses_first():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0, B=np.eye(3))  # -B negative definite
    coeff = trivial_coeff(grid, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    with pytest.raises(geometry.HypothesisViolation, match="Gamma_3"):
        solver.continuation_run(bg, coeff, cfg)


def test_continuation_stall_carries_last_state():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    # one Newton iteration is never enough at dt=0.2, and dt_min forbids
    # halving below 0.15, so the very first step stalls the march
    cfg = solver.SolverConfig(k=3, tau=0.0, max_newton=1, dt_init=0.2, dt_min=0.15)
    with pytest.raises(solver.ContinuationStall) as err:
        solver.continuation_run(bg, coeff, cfg)
    stall = err.value
    assert stall.state is not None
    assert stall.state.t == 0.0
    assert np.array_equal(stall.state.u, np.zeros(grid.shape))
    assert len(stall.reports) == 1  # the anchor was still monitored
    rejected = [rec for rec in stall.state.step_log if not rec.accepted]
    assert rejected and all(rec.note for rec in rejected)


def test_continuation_is_deterministic():
    grid = make_grid(3, 8)
    bg = geometry.flat_background(grid, tau=0.0)
    coeff = default_coeff(grid)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    runs = []
    for _ in range(2):
        state, reports = solver.continuation_run(bg, coeff, cfg)
        runs.append(
            (
                state.u.tobytes(),
                tuple((rec.t, rec.residual_norm, rec.newton_iters) for rec in state.step_log),
                tuple(tuple(rep.to_row()) for rep in reports),
            )
        )
    assert runs[0] == runs[1]


# ---------------------------------------------------------------------------
# manufactured problems


def test_manufacture_trivial_field_gives_zero_alpha():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    c = cones.homotopy_constant(3, 3)
    coeff = solver.manufacture_alpha(grid.zeros(), c, bg, 3)
    assert np.array_equal(coeff.alpha, np.zeros(grid.shape))


def test_manufactured_residual_is_stencil_sized():
    # construction used the analytic jet, so the discrete residual at u_star
    # is the O(h^2) consistency error - nonzero, and shrinking with N
    sups = {}
    for N in (8, 16):
        grid = make_grid(3, N)
        bg = geometry.flat_background(grid, tau=0.0)
        prob = solver.manufactured_problem("0.1*sin(x1)*cos(x2)", 1.0, bg, 3)
        cfg = solver.SolverConfig(k=3, tau=0.0)
        sups[N] = sup_norm(solver.residual(prob.u_star, 1.0, bg, prob.coeff, cfg))
    assert 1e-6 < sups[16] < sups[8] < 1e-1
    assert 2.0 < sups[8] / sups[16] < 8.0  # about 4x per halving of h


def test_manufacture_with_stencil_jet_is_exact_at_grid_level():
    # same field, but alpha built from the stencil jet: u_star is then an
    # exact discrete root and Newton has nothing to do
    grid = make_grid(3, 8)
    bg = geometry.flat_background(grid, tau=0.0)
    from ksig.fieldexpr import analytic_jet

    u_star = analytic_jet("0.1*sin(x1)*cos(x2)", grid).value
    coeff = solver.manufacture_alpha(u_star, 1.0, bg, 3)  # jet defaults to stencil
    cfg = solver.SolverConfig(k=3, tau=0.0)
    assert sup_norm(solver.residual(u_star, 1.0, bg, coeff, cfg)) <= 1e-12


def test_manufacture_rejects_large_amplitude():
    grid = make_grid(3, 16)
    bg = geometry.flat_background(grid, tau=0.0)
    with pytest.raises(cones.InadmissibleStateError, match="node"):
        solver.manufactured_problem("5*sin(x1)*cos(x2)", 1.0, bg, 3)


def test_manufacture_checks_alpha_l_shape():
    grid = make_grid()
    bg = geometry.flat_background(grid, tau=0.0)
    with pytest.raises(ValueError, match="k-1"):
        solver.manufacture_alpha(grid.zeros(), [1.0, 1.0, 1.0], bg, 3)


def test_manufactured_newton_from_interpolant():
    grid = make_grid(3, 16)
    bg = geometry.flat_background(grid, tau=0.0)
    prob = solver.manufactured_problem("0.1*sin(x1)*cos(x2)", 1.0, bg, 3)
    cfg = solver.SolverConfig(k=3, tau=0.0)
    res = solver.newton_solve_at_t(prob.u_star, 1.0, bg, prob.coeff, cfg)
    assert res.residual_norm <= cfg.residual_tol
    assert res.iterations <= 6
    assert sup_norm(res.u - prob.u_star) < 5e-3  # discrete root lies O(h^2) away


def test_manufactured_convergence_order_coarse():
    # the acceptance run measures N=16 -> 32; this coarser 8 -> 16 version
    # keeps unit runtime low, with a window widened for pre-asymptotic h
    errs = {}
    cfg = solver.SolverConfig(k=3, tau=0.0)
    for N in (8, 16):
        grid = make_grid(3, N)
        bg = geometry.flat_background(grid, tau=0.0)
        prob = solver.manufactured_problem("0.1*sin(x1)*cos(x2)", 1.0, bg, 3)
        res = solver.newton_solve_at_t(prob.u_star, 1.0, bg, prob.coeff, cfg)
        errs[N] = sup_norm(res.u - prob.u_star)
    order = np.log2(errs[8] / errs[16])
    assert 1.6 <= order <= 2.4, f"order {order:.3f} from errors {errs}"
