"""Accelerated dual solver for subproblems with invertible metrics.

The dual variable stacks a block on the difference space (paired with g1)
and a block on the primal space (paired with g2); the smooth part is the
metric-weighted least squares term, the nonsmooth part splits blockwise into
the conjugate proxes. A function-value restart keeps the dual objective from
drifting under extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import power_norm_estimate
from .problem import UnsupportedOperation
from .subproblem import InnerSolveResult


@dataclass
class FistaConfig:
    max_inner: int = 50000
    check_every: int = 5
    power_iters: int = 20
    step_safety: float = 1.05
    gap_abs_floor: float = 1e-12   # scaled by 1 + |F(x_k)|; arithmetic noise level


def _split(w, ny):
    return w[:ny], w[ny:]


def dual_smooth_grad(sub, w):
    """Gradient of the smooth dual term: ``C (G^{-1} C* w - a_k)``."""

    metric = sub.metric
    if not metric.supports_inverse:
        raise UnsupportedOperation("dual splitting needs an invertible metric")
    p = sub.problem
    ny = p.B_op.shape_out
    w1, w2 = _split(np.asarray(w, dtype=float), ny)
    cstar = p.B_op.adjoint(w1) + w2
    a_k = sub.x_k - metric.inv_apply(sub.grad_k)
    u = metric.inv_apply(cstar) - a_k
    return np.concatenate([p.B_op.apply(u), u])


def fista_solve(sub, cfg: FistaConfig, accept, warm=None):
    """Run the accelerated dual iteration until the gap test accepts."""

    metric = sub.metric
    if not metric.supports_inverse:
        raise UnsupportedOperation("dual splitting needs an invertible metric")
    p = sub.problem
    b_op = p.B_op
    ny = b_op.shape_out
    nx = sub.x_k.size
    mu = p.mu_lower

    a_k = sub.x_k - metric.inv_apply(sub.grad_k)

    def cstar(w):
        w1, w2 = _split(w, ny)
        return b_op.adjoint(w1) + w2

    def c_apply(u):
        return np.concatenate([b_op.apply(u), u])

    lam = power_norm_estimate(lambda w: c_apply(metric.inv_apply(cstar(w))),
                              ny + nx, iters=cfg.power_iters, seed=3)
    step = 1.0 / (cfg.step_safety * max(lam, 1e-30))

    def smooth_obj_grad(w):
        u = metric.inv_apply(cstar(w))
        diff = u - a_k
        # direct quadratic form avoids cancellation when a_k is large
        val = 0.5 * float(np.dot(diff, metric.apply(diff)))
        return val, c_apply(diff), u

    def block_prox(w, t):
        w1, w2 = _split(w, ny)
        return np.concatenate([p.g1.conj_prox(w1, t), p.g2.conj_prox(w2, t)])

    def dual_value(w, sval):
        w1, w2 = _split(w, ny)
        hstar = p.g1.conj_value(w1) + p.g2.conj_value(w2)
        return sval + hstar - sub.C_k

    def prox_step(point, sval_pt, grad_pt):
        """Backtracked proximal step; guards against an underestimated L."""
        nonlocal step
        for _ in range(60):
            cand = block_prox(point - step * grad_pt, step)
            sval_c, grad_c, _ = smooth_obj_grad(cand)
            delta = cand - point
            if sval_c <= sval_pt + float(np.dot(grad_pt, delta)) \
                    + 0.5 * float(np.dot(delta, delta)) / step + 1e-15 * abs(sval_c):
                return cand, sval_c, grad_c
            step *= 0.5
        return cand, sval_c, grad_c

    w = warm.get("w").copy() if warm and warm.get("w") is not None \
        else np.zeros(ny + nx)
    w = block_prox(w, step)
    w_prev = w.copy()
    sval, grad_w, _ = smooth_obj_grad(w)
    obj = dual_value(w, sval)
    t_mom = 1.0
    weak_viol = 0
    best = None
    best_gap = np.inf

    for j in range(cfg.max_inner):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        v = w + ((t_mom - 1.0) / t_next) * (w - w_prev)
        sval_v, grad_v, _ = smooth_obj_grad(v)
        w_new, sval_new, grad_new = prox_step(v, sval_v, grad_v)
        obj_new = dual_value(w_new, sval_new)
        if obj_new > obj:
            # restart: plain proximal step from w, momentum reset
            w_new, sval_new, grad_new = prox_step(w, sval, grad_w)
            obj_new = dual_value(w_new, sval_new)
            t_next = 1.0
        w_prev, w = w, w_new
        sval, grad_w = sval_new, grad_new
        t_mom = t_next
        obj = obj_new

        if (j + 1) % cfg.check_every == 0 or j + 1 == cfg.max_inner:
            u = metric.inv_apply(cstar(w))
            z = p.domain_project(a_k - u)
            theta_z = sub.theta(z)
            bound = -obj
            gap = theta_z - bound
            dist2 = sub.dist2(z)
            # tolerance scales with the magnitudes cancelled inside gap
            if gap < -1e-10 * (sub.noise_scale + sval):
                weak_viol += 1
            if gap < best_gap:
                best_gap = gap
                best = (z, gap, theta_z, dist2)
            floor = cfg.gap_abs_floor * (sub.noise_scale + sval)
            at_floor = gap <= floor
            if accept(theta_z, gap, dist2) or (at_floor and theta_z < sub.F_xk):
                return InnerSolveResult(
                    y=z, gap=max(gap, 0.0), theta_y=theta_z, dist2=dist2,
                    inner_iters=j + 1, certified=True, warm={"w": w},
                    stats={"step": step}, weak_duality_violations=weak_viol)
            if at_floor:
                return InnerSolveResult(
                    y=z, gap=max(gap, 0.0), theta_y=theta_z, dist2=dist2,
                    inner_iters=j + 1, certified=False, degenerate=True,
                    warm={"w": w}, stats={"step": step},
                    weak_duality_violations=weak_viol)

    z, gap, theta_z, dist2 = best
    return InnerSolveResult(
        y=z, gap=gap, theta_y=theta_z, dist2=dist2, inner_iters=cfg.max_inner,
        certified=False, warm={"w": w}, stats={"step": step},
        weak_duality_violations=weak_viol)
