import numpy as np
import pytest

import vmprox
from vmprox import apps
from vmprox.driver import (LineSearchError, SolverConfig, UncertifiedSolveError,
                           accept_next, check_stop, line_search,
                           power_schedule, run, vmila_inexact_check)
from vmprox.inner_admm import AdmmConfig

import helpers


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(beta=1.5)
    with pytest.raises(ValueError):
        SolverConfig(sigma=0.5)  # must be < mu/2 for mu = 1e-5
    with pytest.raises(ValueError):
        SolverConfig(metric_kind="X")
    with pytest.raises(ValueError):
        SolverConfig(mode="other")


def test_power_schedule():
    eps = power_schedule(1e7, 1.5)
    assert eps(1) == 1e7
    assert eps(4) == pytest.approx(1e7 / 8.0)


@pytest.mark.parametrize("kind", ["H", "BFGS0"])
def test_toy_converges_to_soft_threshold_optimum(kind):
    p, x0 = helpers.toy_problem()
    cfg = SolverConfig(stop_eps=1e-10, stop_tau=1e-14, k_max=50,
                       metric_kind=kind)
    rep = run(p, x0, cfg)
    assert rep.F_final == pytest.approx(1.5, abs=1e-8)
    assert rep.x_final[0] == pytest.approx(1.0, abs=1e-4)
    assert rep.totals["iter"] <= 50
    assert rep.hard_violations == 0


def test_stationary_start_stops_immediately():
    p, _ = helpers.toy_problem()
    cfg = SolverConfig(stop_eps=1e-8, k_max=50, metric_kind="H")
    rep = run(p, np.array([1.0]), cfg)
    assert rep.stop_reason in ("residual", "plateau")
    assert rep.totals["iter"] == 1
    assert rep.F_final == pytest.approx(1.5, abs=1e-12)


def test_rejects_start_outside_domain():
    from vmprox.problem import (CompositeProblem, IdentityOp, NonnegIndicator,
                                QuadraticLoss, ZeroFun)
    p = CompositeProblem(theta=QuadraticLoss(np.zeros(2)), A_op=IdentityOp(2),
                         g1=ZeroFun(), B_op=IdentityOp(2),
                         g2=NonnegIndicator(), mu_lower=1e-5)
    with pytest.raises(ValueError):
        run(p, np.array([-1.0, 0.5]), SolverConfig())


def test_line_search_full_step_on_quadratic():
    p, _ = helpers.toy_problem()
    x = np.array([0.0])
    d = np.array([0.9])
    cfg = SolverConfig()
    alpha, m, x_t, f_t = line_search(p, x, d, p.F(x), cfg, float(d @ d))
    assert m == 0 and alpha == 1.0


def test_line_search_backtracks_when_full_step_overshoots():
    # engineered instance: descent at small steps, increase at the full step
    from vmprox.problem import (CompositeProblem, IdentityOp, QuadraticLoss,
                                WeightedL1, ZeroFun)
    p = CompositeProblem(theta=QuadraticLoss(np.array([0.0])),
                         A_op=IdentityOp(1), g1=ZeroFun(), B_op=IdentityOp(1),
                         g2=WeightedL1(1.0, np.zeros(1)), mu_lower=1e-5)
    x = np.array([1.0])
    d = np.array([-2.5])  # F(x + d) = 0.5 * 2.25 > F(x) = 0.5
    cfg = SolverConfig(beta=0.5, sigma=4e-6)
    alpha, m, _, f_t = line_search(p, x, d, p.F(x), cfg, float(d @ d))
    assert m >= 1
    assert p.F(x) - f_t >= cfg.sigma * alpha * float(d @ d)


def test_line_search_error_on_ascent_direction():
    p, _ = helpers.toy_problem()
    x = np.array([1.0])
    d = np.array([5.0])  # uphill
    cfg = SolverConfig(max_backtracks=30)
    with pytest.raises(LineSearchError):
        line_search(p, x, d, p.F(x), cfg, float(d @ d))


def test_accept_next_tie_goes_to_line_search_point():
    y = np.array([1.0])
    xt = np.array([2.0])
    pick, val = accept_next(y, 5.0, xt, 5.0)
    assert pick is xt
    pick, val = accept_next(y, 4.0, xt, 5.0)
    assert pick is y


def test_check_stop_reasons():
    cfg = SolverConfig(stop_eps=1e-4, stop_tau=1e-6, k_max=10)
    assert check_stop([1.0], 0.0, 1, cfg) == (True, "residual")
    flat = [1.0] * 11
    assert check_stop(flat, None, 5, cfg) == (True, "stagnation")
    assert check_stop([1.0], None, 11, cfg) == (True, "budget")
    assert check_stop([1.0, 0.5], 1.0, 2, cfg) == (False, "")


def test_monotone_decrease_and_certificates_on_small_run():
    p, x0 = helpers.small_lasso(6, 15, seed=4)
    cfg = SolverConfig(stop_eps=1e-7, stop_tau=1e-8, k_max=3000,
                       metric_kind="H", record_iterates=True)
    rep = run(p, x0, cfg)
    assert rep.hard_violations == 0
    fs = [r["F"] for r in rep.rows if r["alpha"] > 0]
    assert all(f2 < f1 for f1, f2 in zip(fs, fs[1:]))


def test_descent_inequality_on_recorded_iterates():
    # model decrease dominates the metric quadratic at every accepted y
    p, x0 = helpers.quadratic_fused_problem(8, seed=6)
    cfg = SolverConfig(stop_eps=1e-9, stop_tau=1e-12, k_max=500,
                       metric_kind="H", record_iterates=True)
    rep = run(p, x0, cfg)
    assert rep.hard_violations == 0
    for it in rep.iterates:
        d = it["y"] - it["x"]
        lin_drop = it["F_x"] - it["theta_y"] \
            + 0.5 * float(d @ it["metric"].apply(d))
        assert lin_drop > 0.5 * p.mu_lower * float(d @ d) - 1e-10


def test_quad_bound_assertion_activates_with_small_eps():
    p, x0 = helpers.quadratic_fused_problem(6, seed=8)
    cfg = SolverConfig(stop_eps=1e-9, stop_tau=1e-12, k_max=300,
                       metric_kind="H",
                       eps_schedule=lambda k: p.mu_lower / 20.0)
    rep = run(p, x0, cfg)
    assert rep.eq_quad_bound_violations == 0


def test_vmila_inexact_check_cases():
    assert vmila_inexact_check(1.0, 2.0, 0.0, 0.5)
    assert not vmila_inexact_check(2.0, 2.0, 0.0, 0.5)        # needs decrease
    assert not vmila_inexact_check(1.0, 2.0, 0.5, 0.0)        # tau = 0: exact
    assert vmila_inexact_check(1.0, 2.0, 0.2, 1.0)


@pytest.mark.parametrize("kind", ["H", "BFGS0"])
def test_vmila_mode_runs_and_decreases(kind):
    p, x0 = helpers.quadratic_fused_problem(8, seed=12)
    cfg = SolverConfig(stop_eps=1e-8, stop_tau=1e-10, k_max=2000,
                       metric_kind=kind, mode="vmila",
                       vmila_tau_schedule=power_schedule(1e7, 2.1))
    rep = run(p, x0, cfg)
    assert rep.hard_violations == 0
    fs = [r["F"] for r in rep.rows if r["alpha"] > 0]
    assert all(f2 < f1 for f1, f2 in zip(fs, fs[1:]))
    assert rep.F_final < p.F(x0)


def test_uncertified_raises_with_partial_report():
    p, x0 = helpers.small_lasso(6, 15, seed=4)
    cfg = SolverConfig(stop_eps=1e-12, stop_tau=1e-16, k_max=4000,
                       metric_kind="H", admm=AdmmConfig(max_inner=2))
    with pytest.raises(UncertifiedSolveError) as err:
        run(p, x0, cfg)
    assert err.value.report is not None


def test_totals_match_trace_columns():
    p, x0 = helpers.quadratic_fused_problem(6, seed=3)
    cfg = SolverConfig(stop_eps=1e-8, stop_tau=1e-10, k_max=500,
                       metric_kind="H")
    rep = run(p, x0, cfg)
    assert rep.totals["iter"] == len(rep.rows)
    assert rep.totals["inner"] == sum(r["inner"] for r in rep.rows)
    assert rep.totals["ls"] == sum(r["backtracks"] for r in rep.rows)


def test_sg_metric_run_on_deblur_model():
    img = np.clip(np.random.default_rng(0).random((12, 12)) * 0.8 + 0.1, 0, 1)
    inst = apps.make_deblur_instance(img, seed=3)
    p, x0 = apps.build_deblur_problem(inst)
    cfg = SolverConfig(stop_eps=1e-4, stop_tau=1e-6, k_max=300,
                       metric_kind="S", eps_schedule=power_schedule(1e7, 1.5))
    rep = run(p, x0, cfg)
    assert rep.hard_violations == 0
    assert rep.F_final < p.F(x0)
