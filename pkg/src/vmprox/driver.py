"""Outer loop: metric selection, certified inexact subproblem solves, Armijo
line search on the direction norm, and the three-clause stopping rule.

Two criteria modes are supported. The default ("vmipg") accepts an inner
point once its certified gap is below ``eps_k ||y - x||^2`` and backtracks
against ``sigma beta^m ||d||^2``; the comparison mode ("vmila") accepts on a
gap bounded by a fraction of the model decrease and backtracks against that
decrease instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import metrics as mt
from .inner_admm import AdmmConfig, admm_solve
from .inner_fista import FistaConfig, fista_solve
from .subproblem import make_subproblem, vmila_acceptor, vmipg_acceptor


class LineSearchError(RuntimeError):
    """Backtracking exceeded its budget; the inner certificate is suspect."""


class UncertifiedSolveError(RuntimeError):
    """An inner solve hit its iteration cap without certifying the gap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def power_schedule(c, p):
    """The schedule ``k -> c / k**p`` (k starts at 1)."""

    def eps(k):
        return c / float(k) ** p

    return eps


@dataclass
class SolverConfig:
    mu_lower: float = 1e-5
    beta: float = 0.1
    sigma: float = 3e-6
    eps_schedule: Callable = field(default_factory=lambda: power_schedule(1e6, 0.5))
    stop_eps: float = 1e-7
    stop_tau: float = 1e-6
    k_max: int = 1000
    metric_kind: str = "H"          # H | S | BFGS0
    mode: str = "vmipg"             # vmipg | vmila
    vmila_tau_schedule: Optional[Callable] = None
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    fista: FistaConfig = field(default_factory=FistaConfig)
    bfgs_c1: float = 1e-6
    bfgs_c2: float = 1e6
    sg_eps_bar: float = 1e-10
    max_backtracks: int = 100
    record_iterates: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.sigma < 0.5 * min(1.0, self.mu_lower):
            raise ValueError("sigma must lie in (0, min(1, mu)/2)")
        if self.mu_lower <= 0:
            raise ValueError("mu_lower must be positive")
        if self.metric_kind not in ("H", "S", "BFGS0"):
            raise ValueError("metric_kind must be H, S or BFGS0")
        if self.mode not in ("vmipg", "vmila"):
            raise ValueError("mode must be vmipg or vmila")
        if self.mode == "vmila" and self.vmila_tau_schedule is None:
            self.vmila_tau_schedule = power_schedule(1e7, 2.1)


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    stop_reason: str = ""
    x_final: Optional[np.ndarray] = None
    F_final: float = np.nan
    certificate_violations: int = 0
    monotone_violations: int = 0
    weak_duality_violations: int = 0
    eq_quad_bound_violations: int = 0
    alpha_floor_warnings: int = 0
    lf_estimate: float = 0.0
    stats_extra: dict = field(default_factory=dict)
    iterates: list = field(default_factory=list)

    def finalize(self, elapsed):
        self.totals = {
            "iter": len(self.rows),
            "Fval": self.F_final,
            "time": elapsed,
            "inner": int(sum(r["inner"] for r in self.rows)),
            "ls": int(sum(r["backtracks"] for r in self.rows)),
        }

    @property
    def hard_violations(self):
        return (self.certificate_violations + self.monotone_violations
                + self.weak_duality_violations)


def check_stop(f_hist, d_norm, k, cfg):
    """Three-clause stop test; returns (should_stop, reason)."""

    if d_norm is not None and d_norm <= cfg.stop_eps:
        return True, "residual"
    if len(f_hist) >= 11:
        rel = abs(f_hist[-1] - f_hist[-11]) / max(1.0, abs(f_hist[-1]))
        if rel <= cfg.stop_tau:
            return True, "stagnation"
    if k > cfg.k_max:
        return True, "budget"
    return False, ""


def line_search(p, x, d, F_x, cfg, target_scale):
    """Smallest backtrack count m with
    ``F(x) - F(x + beta^m d) >= beta^m * target_scale``."""

    step = 1.0
    for m in range(cfg.max_backtracks + 1):
        x_trial = x + step * d
        f_trial = p.F(x_trial)
        if F_x - f_trial >= cfg.sigma * step * target_scale:
            return step, m, x_trial, f_trial
        step *= cfg.beta
    raise LineSearchError(
        "no acceptable step within %d backtracks; inner certificate violated"
        % cfg.max_backtracks)


def accept_next(y, F_y, x_trial, F_trial):
    """Pick the lower objective; ties go to the line-search point."""

    if F_y < F_trial:
        return y, F_y
    return x_trial, F_trial


def vmila_inexact_check(theta_y, theta_xk, gap, tau_k):
    """Decrease-controlled inexactness test used by the comparison mode."""

    return theta_y < theta_xk and gap <= 0.5 * tau_k * (theta_xk - theta_y)


class _MetricState:
    """Per-run state for metric construction (secants, BB step lengths)."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.stepper = mt.ScaledBBStepper()
        self.prev_x = None
        self.prev_grad = None
        self.prev_bfgs = None

    def build(self, p, x, grad):
        kind = self.cfg.metric_kind
        if kind == "H":
            metric = mt.build_hessian_metric(p, x)
        elif kind == "S":
            alpha = self._sg_alpha(x, grad, p)
            metric = mt.build_sg_metric(p, x, alpha, self.cfg.sg_eps_bar)
        else:
            if self.prev_x is None:
                metric = mt.build_bfgs0_metric(
                    np.zeros_like(x), np.zeros_like(x), None,
                    self.cfg.bfgs_c1, self.cfg.bfgs_c2, 1.0, p.mu_lower)
            else:
                s = x - self.prev_x
                r = grad - self.prev_grad
                shape = mt.build_bfgs0_metric(
                    s, r, self.prev_bfgs, self.cfg.bfgs_c1, self.cfg.bfgs_c2,
                    1.0, p.mu_lower)
                alpha = self.stepper.update(s, r, shape.d_apply, shape.d_inv_apply)
                metric = mt.build_bfgs0_metric(
                    s, r, self.prev_bfgs, self.cfg.bfgs_c1, self.cfg.bfgs_c2,
                    alpha, p.mu_lower)
            self.prev_bfgs = metric
        self.prev_x = x.copy()
        self.prev_grad = grad.copy()
        return metric

    def _sg_alpha(self, x, grad, p):
        if self.prev_x is None:
            return 1.0
        s = x - self.prev_x
        r = grad - self.prev_grad
        # SG shape matrix for the BB rule comes from the current point
        V = np.asarray(p.sg_split(x), dtype=float)
        d_inv = np.clip(x / (V + self.cfg.sg_eps_bar), p.mu_lower,
                        1.0 / p.mu_lower)
        d = 1.0 / d_inv
        return self.stepper.update(s, r, lambda v: d * v, lambda v: v / d)


def _inner_route(metric):
    return "admm" if metric.form == "hessian" else "fista"


def run(p, x0, cfg: SolverConfig):
    """Drive the outer iteration from ``x0 in dom g``; returns a RunReport."""

    x = np.asarray(x0, dtype=float).copy()
    if not p.in_domain(x):
        raise ValueError("starting point lies outside dom g")
    report = RunReport()
    t0 = time.perf_counter()
    F_x = p.F(x)
    grad = p.grad_f(x)
    f_hist = [F_x]
    mstate = _MetricState(cfg)
    warm = None
    lf_est = 0.0
    alphas = []
    reason = "budget"
    k = 0

    while True:
        k += 1
        if k > cfg.k_max:
            reason = "budget"
            break
        stop, why = check_stop(f_hist, None, k, cfg)
        if stop:
            reason = why
            break

        eps_k = cfg.eps_schedule(k)
        metric = mstate.build(p, x, grad)
        f_xk = F_x - p.g(x)
        sub = make_subproblem(p, x, grad, metric, eps_k, f_xk=f_xk, F_xk=F_x)
        if cfg.mode == "vmila":
            tau_k = cfg.vmila_tau_schedule(k)
            acceptor = vmila_acceptor(sub, tau_k)
        else:
            acceptor = vmipg_acceptor(sub)
        if _inner_route(metric) == "admm":
            res = admm_solve(sub, cfg.admm, acceptor, warm)
        else:
            res = fista_solve(sub, cfg.fista, acceptor, warm)
        warm = res.warm
        report.weak_duality_violations += res.weak_duality_violations

        d = res.y - x
        d_norm = float(np.linalg.norm(d))
        if d_norm <= cfg.stop_eps:
            report.rows.append({"k": k, "F": F_x, "dnorm": d_norm, "alpha": 0.0,
                                "backtracks": 0, "inner": res.inner_iters})
            reason = "residual"
            break
        if res.degenerate:
            # subproblem solved to arithmetic precision with no measurable
            # model decrease left: the objective cannot move further
            report.rows.append({"k": k, "F": F_x, "dnorm": d_norm, "alpha": 0.0,
                                "backtracks": 0, "inner": res.inner_iters})
            reason = "plateau"
            break
        if not res.certified:
            report.finalize(time.perf_counter() - t0)
            report.x_final, report.F_final = x, F_x
            report.stop_reason = "uncertified"
            raise UncertifiedSolveError(
                "inner solver exhausted its budget at iteration %d "
                "(gap %.3e, required %.3e)"
                % (k, res.gap, eps_k * res.dist2), report)

        # certificate bookkeeping for the two clauses of the gap test
        if cfg.mode == "vmipg":
            ok = res.theta_y < F_x and res.gap <= eps_k * res.dist2 \
                + 1e-12 * sub.noise_scale
        else:
            ok = vmila_inexact_check(res.theta_y, F_x, res.gap, tau_k)
        if not ok:
            report.certificate_violations += 1
        if eps_k <= p.mu_lower / 10.0:
            lhs = d_norm**2
            rhs = 20.0 * (F_x - res.theta_y) / p.mu_lower
            if lhs > rhs + 1e-10 * (1.0 + abs(rhs)):
                report.eq_quad_bound_violations += 1

        if cfg.mode == "vmila":
            target = F_x - res.theta_y
            alpha, m_k, x_trial, f_trial = line_search(p, x, d, F_x, cfg, target)
            x_next, F_next = x_trial, f_trial
        else:
            target = d_norm**2
            alpha, m_k, x_trial, f_trial = line_search(p, x, d, F_x, cfg, target)
            F_y = p.F(res.y)
            x_next, F_next = accept_next(res.y, F_y, x_trial, f_trial)
        if not F_next < F_x:
            report.monotone_violations += 1

        if cfg.record_iterates:
            report.iterates.append({
                "k": k, "x": x.copy(), "y": res.y.copy(), "eps_k": eps_k,
                "gap": res.gap, "metric": metric, "theta_y": res.theta_y,
                "F_x": F_x, "alpha": alpha, "d_norm": d_norm,
            })
        report.rows.append({"k": k, "F": F_next, "dnorm": d_norm, "alpha": alpha,
                            "backtracks": m_k, "inner": res.inner_iters})

        grad_next = p.grad_f(x_next)
        dx = float(np.linalg.norm(x_next - x))
        if dx > 0:
            lf_est = max(lf_est, float(np.linalg.norm(grad_next - grad)) / dx)
        alphas.append(alpha)
        x, F_x, grad = x_next, F_next, grad_next
        f_hist.append(F_x)

    report.x_final = x
    report.F_final = F_x
    report.stop_reason = reason
    report.lf_estimate = lf_est
    if lf_est > 0 and alphas:
        floor = min(1.0, (cfg.mu_lower - 2 * cfg.sigma) * cfg.beta
                    / (2.0 * lf_est)) / 10.0
        report.alpha_floor_warnings = int(sum(a < floor for a in alphas))
    report.finalize(time.perf_counter() - t0)
    return report
